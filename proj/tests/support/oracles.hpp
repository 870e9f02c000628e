#pragma once

// Straight-line reference implementations used only by the tests. They work on
// plain nested vectors in double and share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = std::vector<double>;
using Matrix = std::vector<Vec>;           // [row][col]
using Volume = std::vector<Matrix>;        // [channel][y][x]
using Kernel = std::vector<std::vector<Matrix>>;  // [out][in][ky][kx]

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec matvec(const Matrix& w, const Vec& x) {
    Vec y(w.size(), 0.0);
    for (std::size_t o = 0; o < w.size(); ++o) y[o] = dot(w[o], x);
    return y;
}

inline Vec relu(Vec v) {
    for (double& x : v) x = std::max(0.0, x);
    return v;
}

// ---- discriminator / cross entropy ----------------------------------------------

struct Mlp {
    Matrix w1, w2, w3;
    Vec b1, b2, b3;
};

inline Vec mlp(const Mlp& p, const Vec& x) {
    Vec h1 = matvec(p.w1, x);
    for (std::size_t i = 0; i < h1.size(); ++i) h1[i] += p.b1[i];
    h1 = relu(h1);
    Vec h2 = matvec(p.w2, h1);
    for (std::size_t i = 0; i < h2.size(); ++i) h2[i] += p.b2[i];
    h2 = relu(h2);
    Vec z = matvec(p.w3, h2);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += p.b3[i];
    return z;
}

inline double cross_entropy(const Vec& z, int y) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s) - z[static_cast<std::size_t>(y)];
}

// ---- convolution path -------------------------------------------------------------

/// Direct 3x3 convolution with zero padding 1, stride 1.
inline Volume conv3x3(const Volume& in, const Kernel& k, const Vec& bias) {
    const int cin = static_cast<int>(in.size());
    const int h = static_cast<int>(in[0].size()), w = static_cast<int>(in[0][0].size());
    Volume out(k.size(), Matrix(h, Vec(w, 0.0)));
    for (std::size_t o = 0; o < k.size(); ++o)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = bias[o];
                for (int c = 0; c < cin; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int yy = y + ky - 1, xx = x + kx - 1;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            acc += k[o][c][ky][kx] * in[c][yy][xx];
                        }
                out[o][y][x] = acc;
            }
    return out;
}

inline Volume relu(Volume v) {
    for (auto& m : v)
        for (auto& r : m)
            for (double& x : r) x = std::max(0.0, x);
    return v;
}

inline Volume avg_pool2(const Volume& in) {
    const std::size_t h = in[0].size() / 2, w = in[0][0].size() / 2;
    Volume out(in.size(), Matrix(h, Vec(w, 0.0)));
    for (std::size_t c = 0; c < in.size(); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[c][y][x] = 0.25 * (in[c][2 * y][2 * x] + in[c][2 * y][2 * x + 1] + in[c][2 * y + 1][2 * x] +
                                       in[c][2 * y + 1][2 * x + 1]);
    return out;
}

inline Vec global_avg(const Volume& in) {
    Vec out(in.size(), 0.0);
    for (std::size_t c = 0; c < in.size(); ++c) {
        double s = 0;
        std::size_t n = 0;
        for (const auto& r : in[c])
            for (double x : r) {
                s += x;
                ++n;
            }
        out[c] = s / static_cast<double>(n);
    }
    return out;
}

struct Extractor {
    Kernel k1, k2;
    Vec b1, b2;
};

inline Vec extract(const Extractor& e, const Volume& map) {
    return global_avg(relu(conv3x3(avg_pool2(relu(conv3x3(map, e.k1, e.b1))), e.k2, e.b2)));
}

// ---- mining and losses --------------------------------------------------------------

inline Matrix gram(const Matrix& d) {
    Matrix s(d.size(), Vec(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) s[i][j] = dot(d[i], d[j]);
    return s;
}

struct Mined {
    std::set<std::pair<int, int>> pos, neg;
};

inline Mined mine(const Matrix& sim, const std::vector<int>& y, double eps) {
    Mined m;
    const int b = static_cast<int>(y.size());
    for (int i = 0; i < b; ++i) {
        std::vector<double> pos_s, neg_s;
        for (int j = 0; j < b; ++j) {
            if (j == i) continue;
            (y[j] == y[i] ? pos_s : neg_s).push_back(sim[i][j]);
        }
        if (pos_s.empty() || neg_s.empty()) continue;
        const double max_neg = *std::max_element(neg_s.begin(), neg_s.end());
        const double min_pos = *std::min_element(pos_s.begin(), pos_s.end());
        for (int j = 0; j < b; ++j) {
            if (j == i) continue;
            if (y[j] == y[i] && sim[i][j] < max_neg + eps) m.pos.insert({i, j});
            if (y[j] != y[i] && sim[i][j] > min_pos - eps) m.neg.insert({i, j});
        }
    }
    return m;
}

inline double ms_loss(const Matrix& d, const std::vector<int>& y, double alpha, double beta, double base,
                      double eps) {
    const Matrix sim = gram(d);
    const Mined m = mine(sim, y, eps);
    double total = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        double sp = 0, sn = 0;
        bool any_p = false, any_n = false;
        for (const auto& [a, j] : m.pos)
            if (a == static_cast<int>(i)) {
                sp += std::exp(-alpha * (sim[i][static_cast<std::size_t>(j)] - base));
                any_p = true;
            }
        for (const auto& [a, j] : m.neg)
            if (a == static_cast<int>(i)) {
                sn += std::exp(beta * (sim[i][static_cast<std::size_t>(j)] - base));
                any_n = true;
            }
        if (any_p) total += std::log(1 + sp) / alpha;
        if (any_n) total += std::log(1 + sn) / beta;
    }
    return total / static_cast<double>(d.size());
}

/// Query-combination triplet supervision written out loop by loop.
/// comb[b][i] is combination i of image b.
inline double local_loss(const Matrix& d, const std::vector<Matrix>& comb, const std::vector<int>& y, double alpha,
                         int g_pool, int h_top, double eps) {
    const Matrix sim = gram(d);
    const Mined m = mine(sim, y, eps);
    std::set<int> anchors;
    for (const auto& pr : m.pos) anchors.insert(pr.first);
    for (const auto& pr : m.neg) anchors.insert(pr.first);
    const int nc = static_cast<int>(comb[0].size());
    double total = 0;
    int cnt = 0;
    for (int r : anchors) {
        std::vector<int> P, N;
        for (const auto& [a, j] : m.pos)
            if (a == r) P.push_back(j);
        for (const auto& [a, j] : m.neg)
            if (a == r) N.push_back(j);
        if (P.empty() || N.empty()) continue;
        // top-G negatives by global similarity; equal scores keep the lower index first
        std::vector<int> sorted = N;
        std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
            if (sim[r][a] != sim[r][b]) return sim[r][a] > sim[r][b];
            return a < b;
        });
        const int g = std::min<int>(g_pool, static_cast<int>(sorted.size()));
        const std::vector<int> hard(sorted.begin(), sorted.begin() + g);
        std::vector<double> sp(nc), sn(nc);
        for (int i = 0; i < nc; ++i) {
            double best = -1e300;
            for (int p : P) best = std::max(best, dot(comb[r][i], comb[p][i]));
            sp[i] = best;
            best = -1e300;
            for (int n : hard) best = std::max(best, dot(comb[r][i], comb[n][i]));
            sn[i] = best;
        }
        std::vector<int> idx(nc);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            if (sp[a] != sp[b]) return sp[a] > sp[b];
            return a < b;
        });
        const int h = std::min(h_top, nc);
        double lr = 0;
        for (int k = 0; k < h; ++k) lr += std::max(0.0, alpha - sp[idx[k]] + sn[idx[k]]);
        total += lr / h;
        ++cnt;
    }
    return cnt > 0 ? total / cnt : 0.0;
}

// ---- retrieval -----------------------------------------------------------------------

/// Great-circle distance by the atan2 form of the central angle.
inline double great_circle_m(double lat1, double lon1, double lat2, double lon2) {
    const double r = 6371000.0, k = M_PI / 180.0;
    const double p1 = lat1 * k, p2 = lat2 * k, dl = (lon2 - lon1) * k;
    const double num = std::hypot(std::cos(p2) * std::sin(dl), std::cos(p1) * std::sin(p2) -
                                                                   std::sin(p1) * std::cos(p2) * std::cos(dl));
    const double den = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
    return r * std::atan2(num, den);
}

/// Top-k eigenvectors of the sample covariance, columns ordered by eigenvalue.
inline Eigen::MatrixXd pca_directions(const Eigen::MatrixXd& x, int k) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mean;
    const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::MatrixXd out(x.cols(), k);
    for (int j = 0; j < k; ++j) out.col(j) = es.eigenvectors().col(x.cols() - 1 - j);
    return out;
}

// ---- finite differences ----------------------------------------------------------------

/// Central differences of f at x.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-6) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

}  // namespace oracle
