#include "qdavpr/adversarial.hpp"

#include <string>

namespace qdavpr {

template <typename S>
DomainDiscriminator<S>::DomainDiscriminator(ParameterStore<S>& store, const std::string& name, int dim, int hidden,
                                            std::mt19937_64& rng)
    : fc1(store, name + ".fc1", dim, hidden, rng),
      fc2(store, name + ".fc2", hidden, hidden, rng),
      fc3(store, name + ".fc3", hidden, kDomainCount, rng) {}

template <typename S>
ad::Var<S> DomainDiscriminator<S>::operator()(ad::Var<S> features) const {
    if (features.cols() != fc1.weight->value.cols())
        throw ShapeError("discriminator: feature length " + std::to_string(features.cols()) + ", expected " +
                         std::to_string(fc1.weight->value.cols()));
    return fc3(ad::relu(fc2(ad::relu(fc1(features)))));
}

template <typename S>
DomainFeatureExtractor<S>::DomainFeatureExtractor(ParameterStore<S>& store, const std::string& name, int dim,
                                                  std::mt19937_64& rng)
    : conv1(store, name + ".conv1", dim, dim, rng), conv2(store, name + ".conv2", dim, dim, rng) {}

template <typename S>
ad::Var<S> DomainFeatureExtractor<S>::operator()(ad::Var<S> map, Grid grid) const {
    if (grid.height < 2 || grid.width < 2)
        throw ShapeError("domain feature extractor needs at least a 2x2 map, got " + std::to_string(grid.height) +
                         "x" + std::to_string(grid.width));
    const auto h1 = ad::relu(conv1(map, grid));
    const auto h2 = ad::avg_pool2x2(h1, grid);
    const auto h3 = ad::relu(conv2(h2, ad::pooled_grid(grid)));
    return ad::mean_rows(h3);
}

template <typename S>
AdversarialHeads<S>::AdversarialHeads(int dim, int blocks, const AdversarialConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
    if (cfg.hidden < 1) throw ConfigError("adversarial.hidden must be >= 1");
    std::mt19937_64 rng(seed);
    disc_ = DomainDiscriminator<S>(store_, "adv/disc", dim, cfg.hidden, rng);
    for (int l = 0; l < blocks; ++l)
        extractors_.emplace_back(store_, "adv/extractor" + std::to_string(l), dim, rng);
}

template <typename S>
ad::Var<S> query_adversarial_loss(ad::Tape<S>& tape, std::span<const ad::Var<S>> queries,
                                  std::span<const DomainLabel> labels, const GRLConfig& grl,
                                  const DomainDiscriminator<S>& disc) {
    if (queries.size() != labels.size()) throw ShapeError("query_adversarial_loss: labels not aligned with batch");
    std::vector<ad::Var<S>> rows;
    std::vector<int> targets;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!labels[i]) continue;
        if (*labels[i] < 0 || *labels[i] >= kDomainCount) throw DomainError("domain label out of range");
        rows.push_back(ad::grl(queries[i], static_cast<S>(grl.lambda)));
        targets.insert(targets.end(), static_cast<std::size_t>(queries[i].rows()), *labels[i]);
    }
    if (rows.empty()) return tape.constant(Mat<S>::Zero(1, 1));
    const auto stacked = rows.size() == 1 ? rows.front() : ad::concat_rows<S>(rows);
    return ad::cross_entropy(disc(stacked), std::span<const int>(targets));
}

template <typename S>
ad::Var<S> image_adversarial_loss(ad::Tape<S>& tape, std::span<const std::vector<ad::Var<S>>> maps, Grid grid,
                                  std::span<const DomainLabel> labels, const GRLConfig& grl,
                                  std::span<const DomainFeatureExtractor<S>> extractors,
                                  const DomainDiscriminator<S>& disc) {
    if (maps.size() != labels.size()) throw ShapeError("image_adversarial_loss: labels not aligned with batch");
    std::vector<ad::Var<S>> feats;
    std::vector<int> targets;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (!labels[i]) continue;
        if (*labels[i] < 0 || *labels[i] >= kDomainCount) throw DomainError("domain label out of range");
        if (maps[i].size() != extractors.size())
            throw ShapeError("image_adversarial_loss: one extractor per block is required");
        for (std::size_t l = 0; l < maps[i].size(); ++l) {
            feats.push_back(extractors[l](ad::grl(maps[i][l], static_cast<S>(grl.lambda)), grid));
            targets.push_back(*labels[i]);
        }
    }
    if (feats.empty()) return tape.constant(Mat<S>::Zero(1, 1));
    // Every augmented image contributes exactly L rows, so the flat mean equals
    // the per-image block average averaged over images.
    const auto stacked = feats.size() == 1 ? feats.front() : ad::concat_rows<S>(feats);
    return ad::cross_entropy(disc(stacked), std::span<const int>(targets));
}

template class DomainDiscriminator<float>;
template class DomainDiscriminator<double>;
template class DomainFeatureExtractor<float>;
template class DomainFeatureExtractor<double>;
template class AdversarialHeads<float>;
template class AdversarialHeads<double>;

#define QDAVPR_INSTANTIATE(S)                                                                                   \
    template ad::Var<S> query_adversarial_loss(ad::Tape<S>&, std::span<const ad::Var<S>>,                       \
                                               std::span<const DomainLabel>, const GRLConfig&,                 \
                                               const DomainDiscriminator<S>&);                                 \
    template ad::Var<S> image_adversarial_loss(ad::Tape<S>&, std::span<const std::vector<ad::Var<S>>>, Grid,    \
                                               std::span<const DomainLabel>, const GRLConfig&,                 \
                                               std::span<const DomainFeatureExtractor<S>>,                     \
                                               const DomainDiscriminator<S>&);
QDAVPR_INSTANTIATE(float)
QDAVPR_INSTANTIATE(double)
#undef QDAVPR_INSTANTIATE

}  // namespace qdavpr
