#include "seannet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "seannet/errors.hpp"
#include "seannet/version.hpp"

namespace seannet {

namespace {

constexpr char kMagic[8] = {'S', 'N', 'T', 'A', '0', '0', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "archive format assumes a little-endian host");

}  // namespace

void save_archive(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::ordered_json manifest;
  manifest["version"] = kCheckpointFormatVersion;
  manifest["meta"] = nlohmann::ordered_json::parse(archive.meta_json);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const NamedTensor& nt : archive.tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = nt.name;
    entry["shape"] = nt.tensor.shape;
    entry["offset"] = offset;
    entry["count"] = nt.tensor.size();
    tensors.push_back(std::move(entry));
    offset += nt.tensor.size();
  }
  manifest["tensors"] = std::move(tensors);
  const std::string mbytes = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open archive for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t mlen = mbytes.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  for (const NamedTensor& nt : archive.tensors)
    out.write(reinterpret_cast<const char*>(nt.tensor.data.data()),
              static_cast<std::streamsize>(nt.tensor.size() * sizeof(double)));
  if (!out) throw IoError("short write to archive: " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("bad archive magic: " + path.string());
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mbytes(mlen, '\0');
  in.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw IoError("truncated archive manifest: " + path.string());

  nlohmann::json manifest = nlohmann::json::parse(mbytes);
  if (manifest.at("version").get<int>() != kCheckpointFormatVersion)
    throw IoError("unsupported archive version in " + path.string());

  Archive archive;
  archive.meta_json = manifest.at("meta").dump();
  for (const auto& entry : manifest.at("tensors")) {
    NamedTensor nt;
    nt.name = entry.at("name").get<std::string>();
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated tensor data in " + path.string());
    nt.tensor = Tensor(std::move(shape), std::move(data));
    archive.tensors.push_back(std::move(nt));
  }
  return archive;
}

}  // namespace seannet
