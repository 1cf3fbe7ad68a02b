#pragma once

namespace seannet {

inline constexpr const char* kVersion = "0.1.0";

// Bump when an on-disk layout changes incompatibly.
inline constexpr int kWorldFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kTopoMapFormatVersion = 1;

}  // namespace seannet
