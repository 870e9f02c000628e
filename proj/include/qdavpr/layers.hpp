#pragma once

#include <random>
#include <string>

#include "qdavpr/autodiff.hpp"

namespace qdavpr {

/// y = x W^T + b with W stored (out x in).
template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(ParameterStore<S>& store, const std::string& name, int in, int out, std::mt19937_64& rng,
           bool bias = true);

    ad::Var<S> operator()(ad::Var<S> x) const;

    Parameter<S>* weight = nullptr;
    Parameter<S>* bias = nullptr;
};

template <typename S>
class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParameterStore<S>& store, const std::string& name, int dim);

    ad::Var<S> operator()(ad::Var<S> x) const;

    Parameter<S>* gamma = nullptr;
    Parameter<S>* beta = nullptr;
};

template <typename S>
class Conv3x3 {
public:
    Conv3x3() = default;
    Conv3x3(ParameterStore<S>& store, const std::string& name, int in, int out, std::mt19937_64& rng);

    ad::Var<S> operator()(ad::Var<S> x, Grid grid) const;

    /// Centre tap = identity, all other taps and the bias zero. Requires in == out.
    void set_identity();

    Parameter<S>* weight = nullptr;
    Parameter<S>* bias = nullptr;
};

template <typename S>
struct AttentionResult {
    ad::Var<S> output;
    /// Softmax weights averaged over heads, (query rows x key rows).
    Mat<S> weights;
};

/// Standard multi-head scaled dot-product attention with separate q/k/v projections.
template <typename S>
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore<S>& store, const std::string& name, int dim, int heads,
                       std::mt19937_64& rng);

    AttentionResult<S> operator()(ad::Var<S> query, ad::Var<S> key_value) const;

    [[nodiscard]] int heads() const { return heads_; }

    Linear<S> q_proj, k_proj, v_proj, out_proj;

private:
    int dim_ = 0;
    int heads_ = 1;
};

/// Pre-norm transformer encoder layer: x + MHA(LN(x)), then x + FFN(LN(x)).
template <typename S>
class EncoderLayer {
public:
    EncoderLayer() = default;
    EncoderLayer(ParameterStore<S>& store, const std::string& name, int dim, int heads, int ffn_dim,
                 std::mt19937_64& rng);

    ad::Var<S> operator()(ad::Var<S> x) const;

    LayerNorm<S> norm1, norm2;
    MultiHeadAttention<S> attn;
    Linear<S> ffn1, ffn2;
};

}  // namespace qdavpr
