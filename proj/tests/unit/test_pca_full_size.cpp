#include <doctest.h>

#include "helpers.hpp"
#include "qdavpr/retrieval.hpp"

using namespace qdavpr;

// 4097 random descriptors span exactly 4096 centred directions, so the
// reduction 12288 -> 4096 is lossless for them.
TEST_CASE("PCA reduces 12288-dim descriptors to 4096") {
    std::mt19937_64 rng(11);
    const Mat<float> x = testing::unit_rows(testing::random_matrix<float>(4097, 12288, rng));
    const auto m = fit_pca<float>(x, 4096);
    CHECK(m.output_dim() == 4096);
    CHECK(m.projection.rows() == 12288);

    std::uniform_int_distribution<int> pick(0, 4095);
    for (int t = 0; t < 64; ++t) {
        const int a = pick(rng), b = pick(rng);
        CHECK(std::abs(m.projection.col(a).dot(m.projection.col(b)) - (a == b ? 1.0f : 0.0f)) < 1e-5);
    }

    const Mat<float> sample = x.topRows(200);
    const Mat<float> y = apply_pca(m, sample);
    Mat<double> c = (sample.cast<double>().rowwise() - m.mean.cast<double>());
    for (Eigen::Index r = 0; r < c.rows(); ++r) c.row(r).normalize();
    for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(std::abs(y.row(r).norm() - 1.0f) < 1e-5);
    const Mat<double> want = c * c.transpose();
    const Mat<double> got = (y * y.transpose()).cast<double>();
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-5);
}
