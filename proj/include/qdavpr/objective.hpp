#pragma once

#include <span>

#include "qdavpr/adversarial.hpp"
#include "qdavpr/boq.hpp"
#include "qdavpr/losses.hpp"

namespace qdavpr {

template <typename S>
struct ObjectiveTerms {
    ad::Var<S> ms, local, adv_query, adv_image, total;
};

/// Exactly one of images / features is non-empty.
template <typename S>
struct ObjectiveBatch {
    std::span<const Image> images;
    std::span<const LocalFeatureSet<S>> features;
    std::span<const int> labels;
    std::span<const DomainLabel> domains;
};

/// Records the full training objective of one batch on `tape`. Terms whose
/// weight is zero are not built and stay constant zero.
template <typename S>
ObjectiveTerms<S> build_objective(ad::Tape<S>& tape, const BoQModel<S>& model, const AdversarialHeads<S>& heads,
                                  const ObjectiveBatch<S>& batch, const LossWeights& w, const LocalLossConfig& local,
                                  const GRLConfig& grl);

}  // namespace qdavpr
