#pragma once

#include <optional>
#include <span>
#include <vector>

#include "qdavpr/autodiff.hpp"
#include "qdavpr/layers.hpp"

namespace qdavpr {

inline constexpr int kDomainCount = 6;

/// Per-image synthetic domain id in {0..5}; empty for an original image.
using DomainLabel = std::optional<int>;

struct GRLConfig {
    double lambda = -1.0;
};

struct AdversarialConfig {
    int hidden = 512;
    GRLConfig grl;
};

/// Shared domain classifier: two ReLU hidden layers, six logits.
template <typename S>
class DomainDiscriminator {
public:
    DomainDiscriminator() = default;
    DomainDiscriminator(ParameterStore<S>& store, const std::string& name, int dim, int hidden,
                        std::mt19937_64& rng);

    /// Rows of `features` are independent d-vectors; returns rows x 6 logits.
    ad::Var<S> operator()(ad::Var<S> features) const;

    Linear<S> fc1, fc2, fc3;
};

/// Conv3x3 -> ReLU -> AvgPool 2x2 -> Conv3x3 -> ReLU -> global average pool.
template <typename S>
class DomainFeatureExtractor {
public:
    DomainFeatureExtractor() = default;
    DomainFeatureExtractor(ParameterStore<S>& store, const std::string& name, int dim, std::mt19937_64& rng);

    /// `map` is the N x d token layout of a d x H x W feature map; returns 1 x d.
    ad::Var<S> operator()(ad::Var<S> map, Grid grid) const;

    Conv3x3<S> conv1, conv2;
};

/// Training-only heads. Their parameters live under the "adv/" namespace so a
/// checkpoint can be stripped of them for inference.
template <typename S>
class AdversarialHeads {
public:
    AdversarialHeads(int dim, int blocks, const AdversarialConfig& cfg, std::uint64_t seed);
    AdversarialHeads(const AdversarialHeads&) = delete;
    AdversarialHeads& operator=(const AdversarialHeads&) = delete;
    AdversarialHeads(AdversarialHeads&&) noexcept = default;
    AdversarialHeads& operator=(AdversarialHeads&&) noexcept = default;

    ParameterStore<S>& params() { return store_; }
    const ParameterStore<S>& params() const { return store_; }
    [[nodiscard]] const AdversarialConfig& config() const { return cfg_; }

    const DomainDiscriminator<S>& discriminator() const { return disc_; }
    const std::vector<DomainFeatureExtractor<S>>& extractors() const { return extractors_; }

private:
    AdversarialConfig cfg_;
    ParameterStore<S> store_;
    DomainDiscriminator<S> disc_;
    std::vector<DomainFeatureExtractor<S>> extractors_;
};

/// Mean cross-entropy of the discriminator over every query feature of every
/// augmented image, with the features passed through gradient reversal first.
/// Original images are ignored; a batch without augmented images gives 0.
template <typename S>
ad::Var<S> query_adversarial_loss(ad::Tape<S>& tape, std::span<const ad::Var<S>> queries,
                                  std::span<const DomainLabel> labels, const GRLConfig& grl,
                                  const DomainDiscriminator<S>& disc);

/// For each augmented image: (1/L) sum over blocks of CE(D(phi_l(GRL(F_l))), y),
/// averaged over augmented images. `maps[i][l]` is block l's N x d output of image i.
template <typename S>
ad::Var<S> image_adversarial_loss(ad::Tape<S>& tape, std::span<const std::vector<ad::Var<S>>> maps, Grid grid,
                                  std::span<const DomainLabel> labels, const GRLConfig& grl,
                                  std::span<const DomainFeatureExtractor<S>> extractors,
                                  const DomainDiscriminator<S>& disc);

}  // namespace qdavpr
