#include "qdavpr/retrieval.hpp"

#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "qdavpr/binary_io.hpp"

namespace qdavpr {

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * rad;
    const double dlon = (lon2 - lon1) * rad;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2 * kEarthRadiusMeters * std::asin(std::min(1.0, std::sqrt(a)));
}

ProtocolMode parse_protocol(std::string_view s) {
    if (s == "geo") return ProtocolMode::Geo;
    if (s == "frame") return ProtocolMode::Frame;
    if (s == "pairwise") return ProtocolMode::Pairwise;
    throw ProtocolError("unknown protocol: " + std::string(s));
}

void EvalProtocol::validate() const {
    if (!(geo_threshold_m > 0)) throw ConfigError("geo threshold must be > 0");
    if (frame_tolerance < 0) throw ConfigError("frame tolerance must be >= 0");
    if (ranks.empty()) throw ConfigError("at least one recall rank is required");
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (ranks[i] < 1) throw ConfigError("recall ranks must be >= 1");
        if (i > 0 && ranks[i] <= ranks[i - 1]) throw ConfigError("recall ranks must be strictly ascending");
    }
}

std::vector<bool> positives_geo(const ManifestRow& query, std::span<const ManifestRow> db, double threshold_m) {
    if (!query.has_geo()) throw ProtocolError("geo protocol: query has no lat/lon");
    std::vector<bool> out(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (!db[i].has_geo()) throw ProtocolError("geo protocol: database row " + std::to_string(i) + " has no lat/lon");
        out[i] = haversine_m(*query.lat, *query.lon, *db[i].lat, *db[i].lon) <= threshold_m;
    }
    return out;
}

std::vector<bool> positives_frame(int query_frame, std::span<const int> db_frames, int tolerance) {
    std::vector<bool> out(db_frames.size());
    for (std::size_t i = 0; i < db_frames.size(); ++i) out[i] = std::abs(db_frames[i] - query_frame) <= tolerance;
    return out;
}

std::vector<bool> positives_frame(const ManifestRow& query, std::span<const ManifestRow> db, int tolerance) {
    if (!query.frame_id) throw ProtocolError("frame protocol: query has no frame_id");
    std::vector<int> frames;
    frames.reserve(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (!db[i].frame_id) throw ProtocolError("frame protocol: database row " + std::to_string(i) + " has no frame_id");
        frames.push_back(*db[i].frame_id);
    }
    return positives_frame(*query.frame_id, frames, tolerance);
}

double RecallReport::at(int n) const {
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (ranks[i] == n) return recall[i];
    throw ConfigError("recall rank " + std::to_string(n) + " not in report");
}

RecallReport recall_from_rankings(const std::vector<std::vector<int>>& rankings,
                                  const std::vector<std::vector<bool>>& positives, const std::vector<int>& ranks) {
    if (rankings.size() != positives.size()) throw ShapeError("recall: rankings and positives not aligned");
    RecallReport r;
    r.ranks = ranks;
    r.queries = static_cast<int>(rankings.size());
    std::vector<int> hits(ranks.size(), 0);
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        const auto& mask = positives[q];
        if (std::find(mask.begin(), mask.end(), true) == mask.end()) {
            ++r.queries_without_positive;
            continue;
        }
        int first = -1;
        for (std::size_t pos = 0; pos < rankings[q].size(); ++pos)
            if (mask.at(static_cast<std::size_t>(rankings[q][pos]))) {
                first = static_cast<int>(pos);
                break;
            }
        if (first < 0) continue;
        for (std::size_t i = 0; i < ranks.size(); ++i)
            if (first < ranks[i]) ++hits[i];
    }
    for (int h : hits) r.recall.push_back(r.queries == 0 ? 0.0 : 100.0 * h / r.queries);
    return r;
}

std::string format_recall_table(const RecallReport& r) {
    std::ostringstream out;
    out << "rank  recall(%)\n";
    for (std::size_t i = 0; i < r.ranks.size(); ++i)
        out << "R@" << std::left << std::setw(4) << r.ranks[i] << std::right << std::fixed << std::setprecision(2)
            << std::setw(7) << r.recall[i] << "\n";
    out << "queries: " << r.queries << "  without positives: " << r.queries_without_positive << "\n";
    return out.str();
}

std::string format_recall_kv(const RecallReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < r.ranks.size(); ++i) out << "recall@" << r.ranks[i] << "=" << r.recall[i] << "\n";
    return out.str();
}

void write_descriptor_file(const std::filesystem::path& path, const Mat<float>& descriptors,
                           const std::vector<ManifestRow>& meta) {
    if (static_cast<Eigen::Index>(meta.size()) != descriptors.rows())
        throw ShapeError("descriptor file: metadata length does not match count");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write descriptor file: " + path.string());
    binio::put_magic(out, "QDAV");
    binio::put<std::uint32_t>(out, kDescriptorFileVersion);
    binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(descriptors.rows()));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(descriptors.cols()));
    binio::put_floats(out, {descriptors.data(), static_cast<std::size_t>(descriptors.size())});
    DatasetManifest m{meta};
    binio::put_string(out, manifest_to_csv(m));
}

DescriptorFile read_descriptor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open descriptor file: " + path.string());
    binio::expect_magic(in, "QDAV", path.string());
    const auto version = binio::get<std::uint32_t>(in);
    if (version != kDescriptorFileVersion) throw IoError("unsupported descriptor file version " + std::to_string(version));
    const auto count = binio::get<std::uint64_t>(in);
    const auto dim = binio::get<std::uint32_t>(in);
    DescriptorFile f;
    f.descriptors.resize(static_cast<Eigen::Index>(count), dim);
    binio::get_floats(in, {f.descriptors.data(), static_cast<std::size_t>(f.descriptors.size())});
    f.meta = manifest_from_csv(binio::get_string(in)).rows;
    if (f.meta.size() != count) throw IoError("descriptor file: metadata block has wrong row count");
    return f;
}

}  // namespace qdavpr
