#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "qdavpr/dataset.hpp"
#include "qdavpr/types.hpp"

namespace qdavpr {

inline constexpr double kEarthRadiusMeters = 6371000.0;

/// Great-circle distance on a sphere of radius 6371 km.
[[nodiscard]] double haversine_m(double lat1, double lon1, double lat2, double lon2);

enum class ProtocolMode { Geo, Frame, Pairwise };

[[nodiscard]] ProtocolMode parse_protocol(std::string_view s);

struct EvalProtocol {
    ProtocolMode mode = ProtocolMode::Geo;
    double geo_threshold_m = 25.0;
    int frame_tolerance = 10;
    std::vector<int> ranks = {1, 5, 10};

    void validate() const;
};

/// Exact search over unit-norm rows with per-row manifest metadata.
template <typename S>
class DescriptorIndex {
public:
    DescriptorIndex(Mat<S> descriptors, std::vector<ManifestRow> meta) : data_(std::move(descriptors)), meta_(std::move(meta)) {
        if (static_cast<Eigen::Index>(meta_.size()) != data_.rows())
            throw ShapeError("descriptor index: metadata length does not match descriptor count");
        for (Eigen::Index i = 0; i < data_.rows(); ++i)
            if (std::abs(data_.row(i).norm() - 1.0) > 1e-4)
                throw ShapeError("descriptor index: row " + std::to_string(i) + " is not unit norm");
    }

    [[nodiscard]] const Mat<S>& descriptors() const { return data_; }
    [[nodiscard]] const std::vector<ManifestRow>& meta() const { return meta_; }
    [[nodiscard]] Eigen::Index size() const { return data_.rows(); }
    [[nodiscard]] Eigen::Index dim() const { return data_.cols(); }

private:
    Mat<S> data_;
    std::vector<ManifestRow> meta_;
};

/// Top-k database rows by descending dot product, ties by ascending index.
template <typename S, typename Derived>
std::vector<int> knn(const DescriptorIndex<S>& index, const Eigen::MatrixBase<Derived>& query, int k) {
    if (query.size() != index.dim())
        throw ShapeError("knn: query has " + std::to_string(query.size()) + " dims, index has " +
                         std::to_string(index.dim()));
    if (k < 0 || k > index.size())
        throw ShapeError("knn: k=" + std::to_string(k) + " exceeds database size " + std::to_string(index.size()));
    const Vec<S> scores = index.descriptors() * query.derived().reshaped().template cast<S>();
    std::vector<int> idx(static_cast<std::size_t>(index.size()));
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](int a, int b) { return scores(a) > scores(b) || (scores(a) == scores(b) && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

/// db rows within `threshold_m` of the query's geotag.
[[nodiscard]] std::vector<bool> positives_geo(const ManifestRow& query, std::span<const ManifestRow> db,
                                              double threshold_m);

/// db rows with |frame - query frame| <= tolerance.
[[nodiscard]] std::vector<bool> positives_frame(int query_frame, std::span<const int> db_frames, int tolerance);
[[nodiscard]] std::vector<bool> positives_frame(const ManifestRow& query, std::span<const ManifestRow> db,
                                                int tolerance);

struct RecallReport {
    std::vector<int> ranks;
    std::vector<double> recall;  // percentages, parallel to ranks
    int queries = 0;
    int queries_without_positive = 0;

    [[nodiscard]] double at(int n) const;
    bool operator==(const RecallReport&) const = default;
};

/// Generic scorer: `rankings[q]` is the retrieved order (at least max rank long
/// or the full database), `positives[q]` the ground-truth mask.
[[nodiscard]] RecallReport recall_from_rankings(const std::vector<std::vector<int>>& rankings,
                                                const std::vector<std::vector<bool>>& positives,
                                                const std::vector<int>& ranks);

template <typename S>
RecallReport recall_at_n(const DescriptorIndex<S>& index, const Mat<S>& queries,
                         std::span<const ManifestRow> query_meta, const EvalProtocol& protocol) {
    protocol.validate();
    if (static_cast<Eigen::Index>(query_meta.size()) != queries.rows())
        throw ShapeError("recall_at_n: query metadata not aligned with descriptors");
    if (protocol.mode == ProtocolMode::Pairwise && queries.rows() > index.size())
        throw ProtocolError("pairwise protocol needs one database counterpart per query");
    const int k = std::min<int>(protocol.ranks.back(), static_cast<int>(index.size()));
    std::vector<std::vector<int>> rankings;
    std::vector<std::vector<bool>> positives;
    const std::span<const ManifestRow> db(index.meta());
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        rankings.push_back(knn(index, queries.row(q), k));
        switch (protocol.mode) {
            case ProtocolMode::Geo:
                positives.push_back(positives_geo(query_meta[q], db, protocol.geo_threshold_m));
                break;
            case ProtocolMode::Frame:
                positives.push_back(positives_frame(query_meta[q], db, protocol.frame_tolerance));
                break;
            case ProtocolMode::Pairwise: {
                std::vector<bool> m(static_cast<std::size_t>(index.size()), false);
                m[static_cast<std::size_t>(q)] = true;
                positives.push_back(std::move(m));
                break;
            }
        }
    }
    return recall_from_rankings(rankings, positives, protocol.ranks);
}

/// Plain-text table, one row per rank.
[[nodiscard]] std::string format_recall_table(const RecallReport& r);
/// Lines of the form recall@N=value.
[[nodiscard]] std::string format_recall_kv(const RecallReport& r);

// ---- PCA ------------------------------------------------------------------------

template <typename S>
struct PCAModel {
    RowVec<S> mean;
    Mat<S> projection;  // dim x k, orthonormal columns
    RowVec<S> scale;    // per-component multiplier (ones unless whitened)
    bool whiten = false;

    [[nodiscard]] int output_dim() const { return static_cast<int>(projection.cols()); }
};

/// Principal directions of the centred data. With fewer samples than dimensions
/// the n x n Gram matrix is diagonalised, otherwise a thin SVD is used. Each
/// column's largest-magnitude entry is made positive so the fit is deterministic.
template <typename S>
PCAModel<S> fit_pca(const Mat<S>& data, int k, bool whiten = false) {
    using Dense = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    const auto n = data.rows(), dim = data.cols();
    if (k < 1 || k > dim) throw ShapeError("fit_pca: k=" + std::to_string(k) + " exceeds dimension " + std::to_string(dim));
    if (k > n) throw ShapeError("fit_pca: k=" + std::to_string(k) + " exceeds sample count " + std::to_string(n));
    PCAModel<S> m;
    m.whiten = whiten;
    m.mean = data.colwise().mean();
    const Mat<S> centred = data.rowwise() - m.mean;
    Vec<S> sigma(k);
    bool done = false;
    if (n < dim) {
        const Dense gram = centred * centred.transpose();
        Eigen::SelfAdjointEigenSolver<Dense> es(gram);
        const auto& ev = es.eigenvalues();  // ascending
        const S floor = std::max(ev(n - 1), S(0)) * S(1e-10);
        if (ev(n - k) > floor && ev(n - k) > S(0)) {
            m.projection.resize(dim, k);
            for (int j = 0; j < k; ++j) {
                sigma(j) = std::sqrt(ev(n - 1 - j));
                m.projection.col(j) = centred.transpose() * es.eigenvectors().col(n - 1 - j) / sigma(j);
            }
            done = true;
        }
    }
    if (!done) {
        Eigen::BDCSVD<Dense> svd(centred, Eigen::ComputeThinV);
        m.projection = svd.matrixV().leftCols(k);
        sigma = svd.singularValues().head(k);
    }
    for (int j = 0; j < k; ++j) {
        Eigen::Index arg;
        m.projection.col(j).cwiseAbs().maxCoeff(&arg);
        if (m.projection(arg, j) < 0) m.projection.col(j) *= S(-1);
    }
    m.scale = RowVec<S>::Ones(k);
    if (whiten) {
        const S denom = static_cast<S>(std::max<Eigen::Index>(n - 1, 1));
        for (int j = 0; j < k; ++j) m.scale(j) = S(1) / std::sqrt(sigma(j) * sigma(j) / denom + S(1e-12));
    }
    return m;
}

/// Centre, project, optionally whiten, then L2-normalise every row.
template <typename S>
Mat<S> apply_pca(const PCAModel<S>& m, const Mat<S>& data) {
    if (data.cols() != m.mean.cols()) throw ShapeError("apply_pca: dimension mismatch");
    Mat<S> out = (data.rowwise() - m.mean) * m.projection;
    out = out.array().rowwise() * m.scale.array();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const S n = out.row(r).norm();
        if (n > S(0)) out.row(r) /= n;
    }
    return out;
}

// ---- descriptor file ------------------------------------------------------------

/// "QDAV", u32 version, u64 count, u32 dim, count * dim float32 LE, then the
/// metadata rows as a length-prefixed manifest CSV block.
inline constexpr std::uint32_t kDescriptorFileVersion = 1;

void write_descriptor_file(const std::filesystem::path& path, const Mat<float>& descriptors,
                           const std::vector<ManifestRow>& meta);

struct DescriptorFile {
    Mat<float> descriptors;
    std::vector<ManifestRow> meta;
};

[[nodiscard]] DescriptorFile read_descriptor_file(const std::filesystem::path& path);

}  // namespace qdavpr
