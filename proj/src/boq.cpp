#include "qdavpr/boq.hpp"

#include <cmath>
#include <string>

namespace qdavpr {

void ModelConfig::validate() const {
    if (blocks < 1) throw ConfigError("model.blocks must be >= 1");
    if (queries < 1) throw ConfigError("model.queries must be >= 1");
    if (dim < 1) throw ConfigError("model.dim must be >= 1");
    if (combinations < 1 || combinations > total_queries())
        throw ConfigError("model.combinations must be in [1, blocks*queries] (" + std::to_string(total_queries()) +
                          "), got " + std::to_string(combinations));
    if (encoder_heads < 1 || dim % encoder_heads != 0)
        throw ConfigError("model.dim must be divisible by model.encoder_heads");
    if (patch_size < 1) throw ConfigError("model.patch_size must be >= 1");
    if (backbone_layers < 0) throw ConfigError("model.backbone_layers must be >= 0");
    if (backbone == BackboneKind::ExternalFeatures && external_dim < 1)
        throw ConfigError("model.external_dim is required for external-features backbones");
    if (train_resize < 1 || eval_resize < 1) throw ConfigError("resize values must be positive");
}

template <typename S>
Combination<S> combine_and_normalize(ad::Var<S> stacked_queries, ad::Var<S> mix) {
    if (mix.cols() != stacked_queries.rows())
        throw ShapeError("combine: mixing matrix expects " + std::to_string(mix.cols()) + " query features, got " +
                         std::to_string(stacked_queries.rows()));
    const auto c = ad::matmul(mix, stacked_queries);
    return {ad::normalize_all(ad::reshape(c, 1, c.value().size())), ad::normalize_rows(c)};
}

template <typename S>
CombinationValues<S> combine_and_normalize(const Mat<S>& stacked_queries, const Mat<S>& mix) {
    if (mix.rows() > stacked_queries.rows())
        throw ConfigError("combine: more combinations than query features");
    ad::Tape<S> tape(false);
    const auto r = combine_and_normalize(tape.constant(stacked_queries), tape.constant(mix));
    return {r.descriptor.value(), r.combinations.value()};
}

// ---- backbone -------------------------------------------------------------------

template <typename S>
ToyBackbone<S>::ToyBackbone(ParameterStore<S>& store, const ModelConfig& cfg, std::mt19937_64& rng)
    : patch_size(cfg.patch_size) {
    const int in = 3 * cfg.patch_size * cfg.patch_size;
    patch_embed = Linear<S>(store, "model/backbone.patch_embed", in, cfg.dim, rng);
    for (int i = 0; i < cfg.backbone_layers; ++i)
        layers.emplace_back(store, "model/backbone.layer" + std::to_string(i), cfg.dim, cfg.encoder_heads,
                            cfg.ffn_dim(), rng);
}

template <typename S>
Mat<S> ToyBackbone<S>::patchify(const Image& img, int patch, Grid& grid) {
    if (img.channels != 3)
        throw ShapeError("backbone input must have 3 channels, got " + std::to_string(img.channels));
    if (img.height != img.width)
        throw ShapeError("backbone input must be square, got " + std::to_string(img.height) + "x" +
                         std::to_string(img.width));
    if (img.height % patch != 0)
        throw ShapeError("image side " + std::to_string(img.height) + " is not a multiple of patch size " +
                         std::to_string(patch));
    grid = {img.height / patch, img.width / patch};
    Mat<S> out(grid.size(), 3 * patch * patch);
    for (int py = 0; py < grid.height; ++py)
        for (int px = 0; px < grid.width; ++px) {
            const int row = py * grid.width + px;
            int col = 0;
            for (int c = 0; c < 3; ++c)
                for (int dy = 0; dy < patch; ++dy)
                    for (int dx = 0; dx < patch; ++dx)
                        out(row, col++) = static_cast<S>(img.at(c, py * patch + dy, px * patch + dx));
        }
    return out;
}

template <typename S>
ad::Var<S> ToyBackbone<S>::operator()(ad::Tape<S>& tape, const Image& img, Grid& grid) const {
    auto x = patch_embed(tape.constant(patchify(img, patch_size, grid)));
    for (const auto& layer : layers) x = layer(x);
    return x;
}

// ---- block -----------------------------------------------------------------------

template <typename S>
BoQBlock<S>::BoQBlock(ParameterStore<S>& store, const std::string& name, const ModelConfig& cfg,
                      std::mt19937_64& rng)
    : encoder(store, name + ".encoder", cfg.dim, cfg.encoder_heads, cfg.ffn_dim(), rng) {
    queries = &store.create(name + ".queries",
                            init::normal<S>(cfg.queries, cfg.dim, 1.0 / std::sqrt(static_cast<double>(cfg.dim)), rng));
    self_attn = MultiHeadAttention<S>(store, name + ".self_attn", cfg.dim, cfg.encoder_heads, rng);
    cross_attn = MultiHeadAttention<S>(store, name + ".cross_attn", cfg.dim, cfg.encoder_heads, rng);
}

template <typename S>
BlockOutput<S> BoQBlock<S>::operator()(ad::Var<S> tokens) const {
    if (tokens.cols() != queries->value.cols())
        throw ShapeError("BoQ block: token width " + std::to_string(tokens.cols()) + " vs query width " +
                         std::to_string(queries->value.cols()));
    auto& t = *tokens.tape;
    const auto x = encoder(tokens);
    const auto q = t.parameter(*queries);
    const auto q_refined = ad::add(self_attn(q, q).output, q);
    auto cross = cross_attn(q_refined, x);
    return {x, cross.output, std::move(cross.weights)};
}

// ---- model ------------------------------------------------------------------------

template <typename S>
BoQModel<S>::BoQModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    if (cfg_.backbone == BackboneKind::Toy) {
        backbone_ = ToyBackbone<S>(store_, cfg_, rng);
        reduce_ = Conv3x3<S>(store_, "model/reduce", cfg_.dim, cfg_.dim, rng);
        reduce_.set_identity();
    } else {
        reduce_ = Conv3x3<S>(store_, "model/reduce", cfg_.external_dim, cfg_.dim, rng);
    }
    for (int l = 0; l < cfg_.blocks; ++l)
        blocks_.emplace_back(store_, "model/block" + std::to_string(l), cfg_, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.total_queries()));
    mix_ = &store_.create("model/mix", init::uniform<S>(cfg_.combinations, cfg_.total_queries(), bound, rng));
}

template <typename S>
ad::Var<S> BoQModel<S>::local_features(ad::Tape<S>& tape, const Image& img, Grid& grid) const {
    if (cfg_.backbone != BackboneKind::Toy) throw ConfigError("model expects precomputed features, not images");
    const auto raw = backbone_(tape, img, grid);
    return reduce_(raw, grid);
}

template <typename S>
ad::Var<S> BoQModel<S>::local_features(ad::Tape<S>& tape, const LocalFeatureSet<S>& raw) const {
    if (cfg_.backbone != BackboneKind::ExternalFeatures) throw ConfigError("model expects images, not features");
    if (raw.data.rows() != raw.grid.size()) throw ShapeError("feature rows do not match grid");
    if (raw.data.cols() != cfg_.external_dim)
        throw ShapeError("external features have " + std::to_string(raw.data.cols()) + " channels, model expects " +
                         std::to_string(cfg_.external_dim));
    return reduce_(tape.constant(raw.data), raw.grid);
}

template <typename S>
ImageTrace<S> BoQModel<S>::trace_tokens(ad::Tape<S>& tape, ad::Var<S> local, Grid grid) const {
    ImageTrace<S> tr;
    tr.grid = grid;
    tr.local = local;
    std::vector<ad::Var<S>> outs;
    auto x = local;
    for (const auto& block : blocks_) {
        tr.blocks.push_back(block(x));
        x = tr.blocks.back().features;
        outs.push_back(tr.blocks.back().queries);
    }
    tr.stacked_queries = outs.size() == 1 ? outs.front() : ad::concat_rows<S>(outs);
    auto c = combine_and_normalize(tr.stacked_queries, tape.parameter(*mix_));
    tr.descriptor = c.descriptor;
    tr.combinations = c.combinations;
    return tr;
}

template <typename S>
ImageTrace<S> BoQModel<S>::trace(ad::Tape<S>& tape, const Image& img) const {
    Grid grid;
    const auto local = local_features(tape, img, grid);
    return trace_tokens(tape, local, grid);
}

template <typename S>
ImageTrace<S> BoQModel<S>::trace(ad::Tape<S>& tape, const LocalFeatureSet<S>& raw) const {
    return trace_tokens(tape, local_features(tape, raw), raw.grid);
}

template <typename S>
LocalFeatureSet<S> BoQModel<S>::extract_local_features(const Image& img) const {
    ad::Tape<S> tape(false);
    Grid grid;
    const auto x = local_features(tape, img, grid);
    return {x.value(), grid};
}

template <typename S>
void BoQModel<S>::collect(const ImageTrace<S>& tr, ForwardMode mode, Eigen::Index row, ForwardOutput<S>& out) const {
    out.descriptors.row(row) = tr.descriptor.value();
    if (mode != ForwardMode::Train) return;
    out.combinations.push_back(tr.combinations.value());
    std::vector<LocalFeatureSet<S>> feats;
    std::vector<Mat<S>> queries;
    AttentionMapSet<S> maps{tr.grid, {}};
    for (const auto& b : tr.blocks) {
        feats.push_back({b.features.value(), tr.grid});
        queries.push_back(b.queries.value());
        maps.blocks.push_back(b.attention);
    }
    out.block_features.push_back(std::move(feats));
    out.block_queries.push_back(std::move(queries));
    out.attention.push_back(std::move(maps));
}

template <typename S>
ForwardOutput<S> BoQModel<S>::forward(std::span<const Image> images, ForwardMode mode) const {
    ForwardOutput<S> out;
    out.descriptors.resize(static_cast<Eigen::Index>(images.size()), cfg_.descriptor_dim());
    for (std::size_t i = 0; i < images.size(); ++i) {
        ad::Tape<S> tape(false);
        collect(trace(tape, images[i]), mode, static_cast<Eigen::Index>(i), out);
    }
    return out;
}

template <typename S>
ForwardOutput<S> BoQModel<S>::forward(std::span<const LocalFeatureSet<S>> features, ForwardMode mode) const {
    ForwardOutput<S> out;
    out.descriptors.resize(static_cast<Eigen::Index>(features.size()), cfg_.descriptor_dim());
    for (std::size_t i = 0; i < features.size(); ++i) {
        ad::Tape<S> tape(false);
        collect(trace(tape, features[i]), mode, static_cast<Eigen::Index>(i), out);
    }
    return out;
}

template Combination<float> combine_and_normalize(ad::Var<float>, ad::Var<float>);
template Combination<double> combine_and_normalize(ad::Var<double>, ad::Var<double>);
template CombinationValues<float> combine_and_normalize(const Mat<float>&, const Mat<float>&);
template CombinationValues<double> combine_and_normalize(const Mat<double>&, const Mat<double>&);
template class ToyBackbone<float>;
template class ToyBackbone<double>;
template class BoQBlock<float>;
template class BoQBlock<double>;
template class BoQModel<float>;
template class BoQModel<double>;

}  // namespace qdavpr
