#include "qdavpr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace qdavpr {

void LocalLossConfig::validate() const {
    if (!(alpha > 0)) throw ConfigError("local.alpha must be > 0");
    if (pool_size < 1) throw ConfigError("local.G must be >= 1");
    if (top_k < 1) throw ConfigError("local.H must be >= 1");
}

void LossWeights::validate() const {
    if (local < 0 || adv_query < 0 || adv_image < 0) throw ConfigError("loss weights must be nonnegative");
    if (!(ms_alpha > 0) || !(ms_beta > 0)) throw ConfigError("MS-loss alpha/beta must be > 0");
    if (miner_epsilon < 0) throw ConfigError("miner epsilon must be nonnegative");
}

template <typename S>
TripletIndices mine_triplets(const Mat<S>& descriptors, std::span<const int> labels, double epsilon) {
    const auto b = descriptors.rows();
    if (static_cast<Eigen::Index>(labels.size()) != b) throw ShapeError("mine_triplets: labels not aligned");
    const Mat<S> sim = descriptors * descriptors.transpose();
    const S eps = static_cast<S>(epsilon);
    TripletIndices out;
    for (Eigen::Index i = 0; i < b; ++i) {
        S min_pos = std::numeric_limits<S>::infinity();
        S max_neg = -std::numeric_limits<S>::infinity();
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) min_pos = std::min(min_pos, sim(i, j));
            else max_neg = std::max(max_neg, sim(i, j));
        }
        AnchorGroup g;
        g.anchor = static_cast<int>(i);
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) {
                if (sim(i, j) - eps < max_neg) g.positives.push_back(static_cast<int>(j));
            } else if (sim(i, j) + eps > min_pos) {
                g.negatives.push_back(static_cast<int>(j));
            }
        }
        for (int p : g.positives) {
            out.pos_anchors.push_back(g.anchor);
            out.positives.push_back(p);
        }
        for (int n : g.negatives) {
            out.neg_anchors.push_back(g.anchor);
            out.negatives.push_back(n);
        }
        if (!g.positives.empty() || !g.negatives.empty()) out.groups.push_back(std::move(g));
    }
    return out;
}

namespace {

// log(1 + sum exp(x)) and its softmax-style derivative weights.
template <typename S>
S log1p_sum_exp(const std::vector<S>& x, std::vector<S>& weights) {
    S m = 0;
    for (S v : x) m = std::max(m, v);
    S acc = std::exp(-m);
    for (S v : x) acc += std::exp(v - m);
    const S lse = m + std::log(acc);
    weights.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) weights[k] = std::exp(x[k] - lse);
    return lse;
}

// Indices of `scores` in descending order, ties by ascending position.
template <typename S>
std::vector<int> order_desc(const std::vector<S>& scores) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

template <typename S>
LossGrad<S> ms_loss(const Mat<S>& descriptors, const TripletIndices& pairs, const LossWeights& w) {
    const auto b = descriptors.rows();
    LossGrad<S> out;
    out.grad = Mat<S>::Zero(b, descriptors.cols());
    if (pairs.empty() || b == 0) return out;
    const S alpha = static_cast<S>(w.ms_alpha), beta = static_cast<S>(w.ms_beta), base = static_cast<S>(w.ms_base);
    Mat<S> gsim = Mat<S>::Zero(b, b);
    S total = 0;
    std::vector<S> x, wts;
    for (const auto& g : pairs.groups) {
        const auto r = descriptors.row(g.anchor);
        if (!g.positives.empty()) {
            x.clear();
            for (int p : g.positives) x.push_back(-alpha * (r.dot(descriptors.row(p)) - base));
            total += log1p_sum_exp(x, wts) / alpha;
            for (std::size_t k = 0; k < g.positives.size(); ++k) gsim(g.anchor, g.positives[k]) -= wts[k];
        }
        if (!g.negatives.empty()) {
            x.clear();
            for (int n : g.negatives) x.push_back(beta * (r.dot(descriptors.row(n)) - base));
            total += log1p_sum_exp(x, wts) / beta;
            for (std::size_t k = 0; k < g.negatives.size(); ++k) gsim(g.anchor, g.negatives[k]) += wts[k];
        }
    }
    const S inv_b = S(1) / static_cast<S>(b);
    out.value = total * inv_b;
    out.grad = (gsim + gsim.transpose()) * descriptors * inv_b;
    return out;
}

template <typename S>
LossGrad<S> ms_loss(const Mat<S>& descriptors, std::span<const int> labels, const LossWeights& w) {
    return ms_loss(descriptors, mine_triplets(descriptors, labels, w.miner_epsilon), w);
}

template <typename S>
LossGrad<S> local_triplet_loss(const Mat<S>& descriptors, const Mat<S>& combinations, int n_comb,
                               const TripletIndices& pairs, const LocalLossConfig& cfg) {
    cfg.validate();
    const auto b = descriptors.rows();
    if (n_comb < 1 || combinations.rows() != b * n_comb)
        throw ShapeError("local_triplet_loss: expected " + std::to_string(b * n_comb) + " combination rows, got " +
                         std::to_string(combinations.rows()));
    LossGrad<S> out;
    out.grad = Mat<S>::Zero(combinations.rows(), combinations.cols());
    const int top_h = std::min(cfg.top_k, n_comb);
    const S alpha = static_cast<S>(cfg.alpha);
    auto row = [&](int img, int i) { return combinations.row(static_cast<Eigen::Index>(img) * n_comb + i); };

    struct Term {
        int anchor, comb, pos, neg;
    };
    std::vector<Term> active;
    S total = 0;
    int count = 0;
    std::vector<S> s_pos(n_comb), s_neg(n_comb), neg_sim;
    std::vector<int> best_pos(n_comb), best_neg(n_comb);
    for (const auto& g : pairs.groups) {
        if (g.positives.empty() || g.negatives.empty()) continue;
        const int r = g.anchor;
        neg_sim.clear();
        for (int n : g.negatives) neg_sim.push_back(descriptors.row(r).dot(descriptors.row(n)));
        const auto order = order_desc(neg_sim);
        const int pool_n = std::min<int>(cfg.pool_size, static_cast<int>(g.negatives.size()));
        std::vector<int> pool;
        for (int k = 0; k < pool_n; ++k) pool.push_back(g.negatives[order[k]]);
        std::sort(pool.begin(), pool.end());

        for (int i = 0; i < n_comb; ++i) {
            s_pos[i] = -std::numeric_limits<S>::infinity();
            for (int p : g.positives) {
                const S s = row(r, i).dot(row(p, i));
                if (s > s_pos[i]) {
                    s_pos[i] = s;
                    best_pos[i] = p;
                }
            }
            s_neg[i] = -std::numeric_limits<S>::infinity();
            for (int n : pool) {
                const S s = row(r, i).dot(row(n, i));
                if (s > s_neg[i]) {
                    s_neg[i] = s;
                    best_neg[i] = n;
                }
            }
        }
        const auto top = order_desc(s_pos);
        S anchor_loss = 0;
        for (int k = 0; k < top_h; ++k) {
            const int i = top[k];
            const S hinge = alpha - s_pos[i] + s_neg[i];
            if (hinge > 0) {
                anchor_loss += hinge;
                active.push_back({r, i, best_pos[i], best_neg[i]});
            }
        }
        total += anchor_loss / static_cast<S>(top_h);
        ++count;
    }
    if (count == 0) return out;
    out.value = total / static_cast<S>(count);
    const S c = S(1) / (static_cast<S>(top_h) * static_cast<S>(count));
    for (const auto& t : active) {
        const auto ra = static_cast<Eigen::Index>(t.anchor) * n_comb + t.comb;
        const auto rp = static_cast<Eigen::Index>(t.pos) * n_comb + t.comb;
        const auto rn = static_cast<Eigen::Index>(t.neg) * n_comb + t.comb;
        out.grad.row(ra) += c * (combinations.row(rn) - combinations.row(rp));
        out.grad.row(rp) -= c * combinations.row(ra);
        out.grad.row(rn) += c * combinations.row(ra);
    }
    return out;
}

template <typename S>
LossGrad<S> local_triplet_loss(const Mat<S>& descriptors, const Mat<S>& combinations, int n_comb,
                               std::span<const int> labels, const LocalLossConfig& cfg, double miner_epsilon) {
    return local_triplet_loss(descriptors, combinations, n_comb, mine_triplets(descriptors, labels, miner_epsilon),
                              cfg);
}

double total_loss(const LossParts& parts, const LossWeights& w) {
    return parts.ms + w.local * parts.local + w.adv_query * parts.adv_query + w.adv_image * parts.adv_image;
}

namespace ad {

template <typename S>
Var<S> ms_loss(Var<S> descriptors, const TripletIndices& pairs, const LossWeights& w) {
    auto r = qdavpr::ms_loss(descriptors.value(), pairs, w);
    return external_loss(descriptors, r.value, std::move(r.grad));
}

template <typename S>
Var<S> local_triplet_loss(Var<S> descriptors, Var<S> combinations, int n_comb, const TripletIndices& pairs,
                          const LocalLossConfig& cfg) {
    auto r = qdavpr::local_triplet_loss(descriptors.value(), combinations.value(), n_comb, pairs, cfg);
    return external_loss(combinations, r.value, std::move(r.grad));
}

template <typename S>
Var<S> total_loss(Var<S> ms, Var<S> local, Var<S> adv_query, Var<S> adv_image, const LossWeights& w) {
    const Var<S> terms[] = {ms, scale(local, static_cast<S>(w.local)), scale(adv_query, static_cast<S>(w.adv_query)),
                            scale(adv_image, static_cast<S>(w.adv_image))};
    return sum_all<S>(terms);
}

}  // namespace ad

#define QDAVPR_INSTANTIATE(S)                                                                                \
    template TripletIndices mine_triplets(const Mat<S>&, std::span<const int>, double);                      \
    template LossGrad<S> ms_loss(const Mat<S>&, const TripletIndices&, const LossWeights&);                  \
    template LossGrad<S> ms_loss(const Mat<S>&, std::span<const int>, const LossWeights&);                   \
    template LossGrad<S> local_triplet_loss(const Mat<S>&, const Mat<S>&, int, const TripletIndices&,        \
                                            const LocalLossConfig&);                                         \
    template LossGrad<S> local_triplet_loss(const Mat<S>&, const Mat<S>&, int, std::span<const int>,         \
                                            const LocalLossConfig&, double);                                 \
    template ad::Var<S> ad::ms_loss(ad::Var<S>, const TripletIndices&, const LossWeights&);                  \
    template ad::Var<S> ad::local_triplet_loss(ad::Var<S>, ad::Var<S>, int, const TripletIndices&,           \
                                               const LocalLossConfig&);                                      \
    template ad::Var<S> ad::total_loss(ad::Var<S>, ad::Var<S>, ad::Var<S>, ad::Var<S>, const LossWeights&);
QDAVPR_INSTANTIATE(float)
QDAVPR_INSTANTIATE(double)
#undef QDAVPR_INSTANTIATE

}  // namespace qdavpr
