#include "qdavpr/feature_file.hpp"

#include <cmath>
#include <fstream>

#include "qdavpr/binary_io.hpp"

namespace qdavpr {

void write_feature_file(const std::filesystem::path& path, const std::vector<LocalFeatureSet<float>>& sets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature file: " + path.string());
    const std::uint32_t n = sets.empty() ? 0 : static_cast<std::uint32_t>(sets.front().data.rows());
    const std::uint32_t d = sets.empty() ? 0 : static_cast<std::uint32_t>(sets.front().data.cols());
    binio::put_magic(out, "QFEA");
    binio::put<std::uint32_t>(out, kFeatureFileVersion);
    binio::put<std::uint64_t>(out, sets.size());
    binio::put<std::uint32_t>(out, n);
    binio::put<std::uint32_t>(out, d);
    for (const auto& s : sets) {
        if (s.data.rows() != n || s.data.cols() != d) throw ShapeError("feature file: all sets must share N and d");
        binio::put_floats(out, {s.data.data(), static_cast<std::size_t>(s.data.size())});
    }
}

std::vector<LocalFeatureSet<float>> read_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path.string());
    binio::expect_magic(in, "QFEA", path.string());
    const auto version = binio::get<std::uint32_t>(in);
    if (version != kFeatureFileVersion) throw IoError("unsupported feature file version " + std::to_string(version));
    const auto count = binio::get<std::uint64_t>(in);
    const auto n = binio::get<std::uint32_t>(in);
    const auto d = binio::get<std::uint32_t>(in);
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (side * side != static_cast<int>(n)) throw ShapeError("feature file: N=" + std::to_string(n) + " is not a square grid");
    std::vector<LocalFeatureSet<float>> sets(count);
    for (auto& s : sets) {
        s.grid = {side, side};
        s.data.resize(n, d);
        binio::get_floats(in, {s.data.data(), static_cast<std::size_t>(s.data.size())});
    }
    return sets;
}

}  // namespace qdavpr
