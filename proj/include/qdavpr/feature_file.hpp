#pragma once

#include <filesystem>
#include <vector>

#include "qdavpr/boq.hpp"

namespace qdavpr {

/// Precomputed backbone features: "QFEA", u32 version, u64 count, u32 N, u32 d,
/// then count * N * d little-endian float32. N must be a square grid.
inline constexpr std::uint32_t kFeatureFileVersion = 1;

void write_feature_file(const std::filesystem::path& path, const std::vector<LocalFeatureSet<float>>& sets);
[[nodiscard]] std::vector<LocalFeatureSet<float>> read_feature_file(const std::filesystem::path& path);

}  // namespace qdavpr
