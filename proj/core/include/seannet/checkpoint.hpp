#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "seannet/tensor.hpp"

namespace seannet {

// Named-tensor archive: versioned header, JSON manifest (names, shapes,
// offsets, opaque metadata), then raw little-endian 64-bit floats.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Archive {
  std::vector<NamedTensor> tensors;
  std::string meta_json = "{}";  // caller-defined manifest payload
};

void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);

}  // namespace seannet
