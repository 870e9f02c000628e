#pragma once

#include <functional>
#include <random>

#include "oracles.hpp"
#include "qdavpr/autodiff.hpp"

namespace testing {

using qdavpr::Grid;
using qdavpr::Mat;
using Matd = qdavpr::Mat<double>;

template <typename S = double>
Mat<S> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Mat<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
    return m;
}

template <typename S = double>
Mat<S> unit_rows(Mat<S> m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r).normalize();
    return m;
}

inline oracle::Matrix to_rows(const Matd& m) {
    oracle::Matrix out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

inline oracle::Vec to_vec(const Matd& m) { return {m.data(), m.data() + m.size()}; }

/// Token grid (row y*W+x, column c) to a [c][y][x] volume.
inline oracle::Volume to_volume(const Matd& tokens, Grid g) {
    oracle::Volume v(static_cast<std::size_t>(tokens.cols()),
                     oracle::Matrix(g.height, oracle::Vec(static_cast<std::size_t>(g.width))));
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            for (Eigen::Index c = 0; c < tokens.cols(); ++c) v[c][y][x] = tokens(y * g.width + x, c);
    return v;
}

/// Cout x (9 Cin) weight with column (ky*3+kx)*Cin+c to a [o][c][ky][kx] kernel.
inline oracle::Kernel to_kernel(const Matd& w, int cin) {
    oracle::Kernel k(static_cast<std::size_t>(w.rows()),
                     std::vector<oracle::Matrix>(cin, oracle::Matrix(3, oracle::Vec(3))));
    for (Eigen::Index o = 0; o < w.rows(); ++o)
        for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) k[o][c][ky][kx] = w(o, (ky * 3 + kx) * cin + c);
    return k;
}

inline double max_rel_error(const oracle::Vec& a, const oracle::Vec& b, double floor = 1e-8) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
    return worst;
}

inline double max_abs_error(const oracle::Vec& a, const oracle::Vec& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Scalar probe sum(out .* weights) so any matrix-valued op can be differentiated.
inline qdavpr::ad::Var<double> probe(qdavpr::ad::Var<double> out, const Matd& weights) {
    using namespace qdavpr::ad;
    auto flat = reshape(out, 1, out.rows() * out.cols());
    Matd w = weights;
    auto wv = out.tape->constant(Eigen::Map<const Matd>(w.data(), 1, w.size()));
    return matmul_nt(flat, wv);
}

using Builder = std::function<qdavpr::ad::Var<double>(qdavpr::ad::Tape<double>&, qdavpr::ad::Var<double>)>;

/// Autodiff gradient of probe(build(x)) against central differences; returns the max
/// absolute deviation scaled by max(1, |g|).
inline double gradient_check(const Builder& build, const Matd& x0, std::mt19937_64& rng, double h = 1e-6) {
    qdavpr::Parameter<double> p;
    p.value = x0;
    p.zero_grad();
    Matd weights;
    {
        qdavpr::ad::Tape<double> t;
        auto out = build(t, t.parameter(p));
        weights = random_matrix(out.rows(), out.cols(), rng);
    }
    auto eval = [&](const oracle::Vec& xs) {
        qdavpr::Parameter<double> q;
        q.value = Eigen::Map<const Matd>(xs.data(), x0.rows(), x0.cols());
        qdavpr::ad::Tape<double> t(false);
        return probe(build(t, t.parameter(q)), weights).value()(0, 0);
    };
    qdavpr::ad::Tape<double> t;
    auto loss = probe(build(t, t.parameter(p)), weights);
    t.backward(loss);
    const auto numeric = oracle::numeric_gradient(eval, to_vec(x0), h);
    const auto analytic = to_vec(p.grad);
    double worst = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
        worst = std::max(worst, std::abs(numeric[i] - analytic[i]) / std::max(1.0, std::abs(numeric[i])));
    return worst;
}

}  // namespace testing
