#pragma once

#include <span>
#include <vector>

#include "qdavpr/autodiff.hpp"

namespace qdavpr {

struct AnchorGroup {
    int anchor = 0;
    std::vector<int> positives;  // ascending batch index
    std::vector<int> negatives;  // ascending batch index
};

/// Mined pairs, both as flat parallel lists and grouped by anchor.
struct TripletIndices {
    std::vector<int> pos_anchors, positives;
    std::vector<int> neg_anchors, negatives;
    std::vector<AnchorGroup> groups;  // ascending anchor, anchors with at least one mined pair

    [[nodiscard]] bool empty() const { return positives.empty() && negatives.empty(); }
};

struct LocalLossConfig {
    double alpha = 0.05;  // margin
    int pool_size = 10;   // G, hard negatives per anchor
    int top_k = 8;        // H, combinations kept per anchor

    void validate() const;
};

struct LossWeights {
    double local = 0.01;
    double adv_query = 0.05;
    double adv_image = 0.05;
    double ms_alpha = 1.0;
    double ms_beta = 50.0;
    double ms_base = 0.0;
    double miner_epsilon = 0.1;

    void validate() const;
};

template <typename S>
struct LossGrad {
    S value = 0;
    Mat<S> grad;  // d value / d input
};

/// Multi-similarity mining on dot-product similarities: for anchor i, keep
/// positive j if s_ij - eps < max_neg s_ik and negative k if s_ik + eps > min_pos s_ij.
template <typename S>
TripletIndices mine_triplets(const Mat<S>& descriptors, std::span<const int> labels, double epsilon);

/// Multi-similarity loss over the given mined pairs, averaged over all B rows.
template <typename S>
LossGrad<S> ms_loss(const Mat<S>& descriptors, const TripletIndices& pairs, const LossWeights& w);

template <typename S>
LossGrad<S> ms_loss(const Mat<S>& descriptors, std::span<const int> labels, const LossWeights& w);

/// Query-combination triplet loss. `combinations` stacks every image's N_c unit
/// rows: row b * n_comb + i is combination i of image b. The gradient is w.r.t.
/// `combinations`; descriptors only drive the hard-negative pool selection.
template <typename S>
LossGrad<S> local_triplet_loss(const Mat<S>& descriptors, const Mat<S>& combinations, int n_comb,
                               const TripletIndices& pairs, const LocalLossConfig& cfg);

template <typename S>
LossGrad<S> local_triplet_loss(const Mat<S>& descriptors, const Mat<S>& combinations, int n_comb,
                               std::span<const int> labels, const LocalLossConfig& cfg, double miner_epsilon);

struct LossParts {
    double ms = 0;
    double local = 0;
    double adv_query = 0;
    double adv_image = 0;
};

[[nodiscard]] double total_loss(const LossParts& parts, const LossWeights& w);

namespace ad {

template <typename S>
Var<S> ms_loss(Var<S> descriptors, const TripletIndices& pairs, const LossWeights& w);

template <typename S>
Var<S> local_triplet_loss(Var<S> descriptors, Var<S> combinations, int n_comb, const TripletIndices& pairs,
                          const LocalLossConfig& cfg);

template <typename S>
Var<S> total_loss(Var<S> ms, Var<S> local, Var<S> adv_query, Var<S> adv_image, const LossWeights& w);

}  // namespace ad

}  // namespace qdavpr
