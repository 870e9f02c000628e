#include "qdavpr/objective.hpp"

namespace qdavpr {

template <typename S>
ObjectiveTerms<S> build_objective(ad::Tape<S>& tape, const BoQModel<S>& model, const AdversarialHeads<S>& heads,
                                  const ObjectiveBatch<S>& batch, const LossWeights& w, const LocalLossConfig& local,
                                  const GRLConfig& grl) {
    const bool external = !batch.features.empty();
    const std::size_t b = external ? batch.features.size() : batch.images.size();
    if (batch.labels.size() != b || batch.domains.size() != b)
        throw ShapeError("objective: labels and domains must be aligned with the batch");
    std::vector<ad::Var<S>> desc, comb, queries;
    std::vector<std::vector<ad::Var<S>>> maps;
    Grid grid;
    for (std::size_t i = 0; i < b; ++i) {
        const auto tr = external ? model.trace(tape, batch.features[i]) : model.trace(tape, batch.images[i]);
        desc.push_back(tr.descriptor);
        comb.push_back(tr.combinations);
        queries.push_back(tr.stacked_queries);
        std::vector<ad::Var<S>> per_block;
        for (const auto& blk : tr.blocks) per_block.push_back(blk.features);
        maps.push_back(std::move(per_block));
        if (i > 0 && !(tr.grid == grid)) throw ShapeError("objective: all batch items need the same feature grid");
        grid = tr.grid;
    }
    const auto D = ad::concat_rows<S>(desc);
    const auto C = ad::concat_rows<S>(comb);
    const auto pairs = mine_triplets(D.value(), batch.labels, w.miner_epsilon);
    const auto zero = tape.constant(Mat<S>::Zero(1, 1));

    ObjectiveTerms<S> t;
    t.ms = ad::ms_loss(D, pairs, w);
    t.local = w.local > 0 ? ad::local_triplet_loss(D, C, model.config().combinations, pairs, local) : zero;
    t.adv_query = w.adv_query > 0
                      ? query_adversarial_loss<S>(tape, queries, batch.domains, grl, heads.discriminator())
                      : zero;
    t.adv_image = w.adv_image > 0 ? image_adversarial_loss<S>(tape, maps, grid, batch.domains, grl, heads.extractors(),
                                                              heads.discriminator())
                                  : zero;
    t.total = ad::total_loss(t.ms, t.local, t.adv_query, t.adv_image, w);
    return t;
}

template ObjectiveTerms<float> build_objective(ad::Tape<float>&, const BoQModel<float>&,
                                               const AdversarialHeads<float>&, const ObjectiveBatch<float>&,
                                               const LossWeights&, const LocalLossConfig&, const GRLConfig&);
template ObjectiveTerms<double> build_objective(ad::Tape<double>&, const BoQModel<double>&,
                                                const AdversarialHeads<double>&, const ObjectiveBatch<double>&,
                                                const LossWeights&, const LocalLossConfig&, const GRLConfig&);

}  // namespace qdavpr
