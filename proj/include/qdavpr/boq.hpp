#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qdavpr/autodiff.hpp"
#include "qdavpr/image.hpp"
#include "qdavpr/layers.hpp"

namespace qdavpr {

enum class BackboneKind { Toy, ExternalFeatures };

struct ModelConfig {
    int blocks = 2;          // L
    int queries = 64;        // M, per block
    int dim = 384;           // d
    int combinations = 32;   // N_c
    int encoder_heads = 8;
    int encoder_ffn_dim = 0; // 0 means 4 * dim
    BackboneKind backbone = BackboneKind::Toy;
    int patch_size = 14;
    int backbone_layers = 2;
    int external_dim = 0;    // channel count of precomputed features
    int train_resize = 280;
    int eval_resize = 322;

    void validate() const;
    [[nodiscard]] int ffn_dim() const { return encoder_ffn_dim > 0 ? encoder_ffn_dim : 4 * dim; }
    [[nodiscard]] int total_queries() const { return blocks * queries; }
    [[nodiscard]] int descriptor_dim() const { return combinations * dim; }
};

/// N x d token matrix over an H x W grid.
template <typename S>
struct LocalFeatureSet {
    Mat<S> data;
    Grid grid;
};

/// Head-averaged cross-attention per block, each M x (H*W).
template <typename S>
struct AttentionMapSet {
    Grid grid;
    std::vector<Mat<S>> blocks;
};

template <typename S>
struct BlockOutput {
    ad::Var<S> features;  // X_l, N x d
    ad::Var<S> queries;   // O_l, M x d
    Mat<S> attention;     // M x N
};

/// Graph handles for one image's forward pass.
template <typename S>
struct ImageTrace {
    Grid grid;
    ad::Var<S> local;                   // X_0 after channel reduction
    std::vector<BlockOutput<S>> blocks;
    ad::Var<S> stacked_queries;         // (L*M) x d
    ad::Var<S> combinations;            // N_c x d, unit rows
    ad::Var<S> descriptor;              // 1 x (N_c*d), unit norm
};

enum class ForwardMode { Train, Infer };

template <typename S>
struct ForwardOutput {
    Mat<S> descriptors;  // B x (N_c*d)
    // Train mode only:
    std::vector<Mat<S>> combinations;
    std::vector<std::vector<LocalFeatureSet<S>>> block_features;
    std::vector<std::vector<Mat<S>>> block_queries;
    std::vector<AttentionMapSet<S>> attention;
};

template <typename S>
struct Combination {
    ad::Var<S> descriptor;
    ad::Var<S> combinations;
};

/// C = W_mix * O_all; the descriptor is C flattened and L2-normalised as a whole,
/// the combinations are the rows of C normalised independently.
template <typename S>
Combination<S> combine_and_normalize(ad::Var<S> stacked_queries, ad::Var<S> mix);

template <typename S>
struct CombinationValues {
    RowVec<S> descriptor;
    Mat<S> combinations;
};

template <typename S>
CombinationValues<S> combine_and_normalize(const Mat<S>& stacked_queries, const Mat<S>& mix);

/// Patch embedding followed by a stack of encoder layers; emits `dim` channels.
template <typename S>
class ToyBackbone {
public:
    ToyBackbone() = default;
    ToyBackbone(ParameterStore<S>& store, const ModelConfig& cfg, std::mt19937_64& rng);

    ad::Var<S> operator()(ad::Tape<S>& tape, const Image& img, Grid& grid) const;

    /// Rows are patches in raster order, columns (channel, dy, dx).
    [[nodiscard]] static Mat<S> patchify(const Image& img, int patch, Grid& grid);

    int patch_size = 14;
    Linear<S> patch_embed;
    std::vector<EncoderLayer<S>> layers;
};

/// One Bag-of-Queries block: encoder refinement, query self-attention and
/// cross-attention of the learned queries onto the refined tokens.
template <typename S>
class BoQBlock {
public:
    BoQBlock() = default;
    BoQBlock(ParameterStore<S>& store, const std::string& name, const ModelConfig& cfg, std::mt19937_64& rng);

    BlockOutput<S> operator()(ad::Var<S> tokens) const;

    EncoderLayer<S> encoder;
    Parameter<S>* queries = nullptr;  // M x d
    MultiHeadAttention<S> self_attn;
    MultiHeadAttention<S> cross_attn;
};

template <typename S>
class BoQModel {
public:
    BoQModel(const ModelConfig& cfg, std::uint64_t seed);
    BoQModel(const BoQModel&) = delete;
    BoQModel& operator=(const BoQModel&) = delete;
    BoQModel(BoQModel&&) noexcept = default;
    BoQModel& operator=(BoQModel&&) noexcept = default;

    [[nodiscard]] const ModelConfig& config() const { return cfg_; }
    ParameterStore<S>& params() { return store_; }
    const ParameterStore<S>& params() const { return store_; }

    /// Backbone + channel reduction for one image.
    ad::Var<S> local_features(ad::Tape<S>& tape, const Image& img, Grid& grid) const;
    /// Channel reduction of precomputed backbone features.
    ad::Var<S> local_features(ad::Tape<S>& tape, const LocalFeatureSet<S>& raw) const;

    ImageTrace<S> trace(ad::Tape<S>& tape, const Image& img) const;
    ImageTrace<S> trace(ad::Tape<S>& tape, const LocalFeatureSet<S>& raw) const;

    [[nodiscard]] LocalFeatureSet<S> extract_local_features(const Image& img) const;

    [[nodiscard]] ForwardOutput<S> forward(std::span<const Image> images, ForwardMode mode) const;
    [[nodiscard]] ForwardOutput<S> forward(std::span<const LocalFeatureSet<S>> features, ForwardMode mode) const;

    [[nodiscard]] const std::vector<BoQBlock<S>>& blocks() const { return blocks_; }
    [[nodiscard]] Parameter<S>& mix() const { return *mix_; }
    [[nodiscard]] const Conv3x3<S>& channel_reduction() const { return reduce_; }
    [[nodiscard]] const ToyBackbone<S>& backbone() const { return backbone_; }

private:
    ImageTrace<S> trace_tokens(ad::Tape<S>& tape, ad::Var<S> local, Grid grid) const;
    void collect(const ImageTrace<S>& tr, ForwardMode mode, Eigen::Index row, ForwardOutput<S>& out) const;

    ModelConfig cfg_;
    ParameterStore<S> store_;
    ToyBackbone<S> backbone_;
    Conv3x3<S> reduce_;
    std::vector<BoQBlock<S>> blocks_;
    Parameter<S>* mix_ = nullptr;  // N_c x (L*M)
};

}  // namespace qdavpr
