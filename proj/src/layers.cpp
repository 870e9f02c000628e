#include "qdavpr/layers.hpp"

#include <cmath>
#include <vector>

namespace qdavpr {

template <typename S>
Linear<S>::Linear(ParameterStore<S>& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                  bool with_bias) {
    weight = &store.create(name + ".weight", init::fan_in_uniform<S>(out, in, in, rng));
    if (with_bias) bias = &store.create(name + ".bias", init::fan_in_uniform<S>(1, out, in, rng));
}

template <typename S>
ad::Var<S> Linear<S>::operator()(ad::Var<S> x) const {
    auto& t = *x.tape;
    return ad::linear(x, t.parameter(*weight), bias ? t.parameter(*bias) : ad::Var<S>{});
}

template <typename S>
LayerNorm<S>::LayerNorm(ParameterStore<S>& store, const std::string& name, int dim) {
    gamma = &store.create(name + ".weight", Mat<S>::Ones(1, dim));
    beta = &store.create(name + ".bias", Mat<S>::Zero(1, dim));
}

template <typename S>
ad::Var<S> LayerNorm<S>::operator()(ad::Var<S> x) const {
    auto& t = *x.tape;
    return ad::layer_norm(x, t.parameter(*gamma), t.parameter(*beta));
}

template <typename S>
Conv3x3<S>::Conv3x3(ParameterStore<S>& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
    weight = &store.create(name + ".weight", init::fan_in_uniform<S>(out, 9 * in, 9 * in, rng));
    bias = &store.create(name + ".bias", Mat<S>::Zero(1, out));
}

template <typename S>
ad::Var<S> Conv3x3<S>::operator()(ad::Var<S> x, Grid grid) const {
    auto& t = *x.tape;
    return ad::conv3x3(x, grid, t.parameter(*weight), t.parameter(*bias));
}

template <typename S>
void Conv3x3<S>::set_identity() {
    const Eigen::Index out = weight->value.rows();
    const Eigen::Index in = weight->value.cols() / 9;
    if (in != out) throw ConfigError("identity conv needs equal channel counts");
    weight->value.setZero();
    for (Eigen::Index c = 0; c < out; ++c) weight->value(c, 4 * in + c) = S(1);
    bias->value.setZero();
}

template <typename S>
MultiHeadAttention<S>::MultiHeadAttention(ParameterStore<S>& store, const std::string& name, int dim, int heads,
                                          std::mt19937_64& rng)
    : dim_(dim), heads_(heads) {
    if (heads <= 0 || dim % heads != 0)
        throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                          " heads");
    // Xavier-uniform projections and zero biases, as in torch.nn.MultiheadAttention.
    const double bound = std::sqrt(6.0 / (2.0 * dim));
    auto make = [&](const std::string& n) {
        Linear<S> l;
        l.weight = &store.create(name + "." + n + ".weight", init::uniform<S>(dim, dim, bound, rng));
        l.bias = &store.create(name + "." + n + ".bias", Mat<S>::Zero(1, dim));
        return l;
    };
    q_proj = make("q_proj");
    k_proj = make("k_proj");
    v_proj = make("v_proj");
    out_proj.weight = &store.create(name + ".out_proj.weight", init::fan_in_uniform<S>(dim, dim, dim, rng));
    out_proj.bias = &store.create(name + ".out_proj.bias", Mat<S>::Zero(1, dim));
}

template <typename S>
AttentionResult<S> MultiHeadAttention<S>::operator()(ad::Var<S> query, ad::Var<S> key_value) const {
    if (query.cols() != dim_ || key_value.cols() != dim_)
        throw ShapeError("attention: expected width " + std::to_string(dim_) + ", got " +
                         std::to_string(query.cols()) + " / " + std::to_string(key_value.cols()));
    const auto q = q_proj(query);
    const auto k = k_proj(key_value);
    const auto v = v_proj(key_value);
    const int head_dim = dim_ / heads_;
    const S scale = S(1) / std::sqrt(static_cast<S>(head_dim));

    AttentionResult<S> result;
    result.weights = Mat<S>::Zero(query.rows(), key_value.rows());
    std::vector<ad::Var<S>> heads;
    heads.reserve(heads_);
    for (int h = 0; h < heads_; ++h) {
        const auto qh = ad::slice_cols(q, h * head_dim, head_dim);
        const auto kh = ad::slice_cols(k, h * head_dim, head_dim);
        const auto vh = ad::slice_cols(v, h * head_dim, head_dim);
        const auto probs = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale));
        result.weights += probs.value();
        heads.push_back(ad::matmul(probs, vh));
    }
    result.weights /= static_cast<S>(heads_);
    const auto merged = heads_ == 1 ? heads.front() : ad::concat_cols<S>(heads);
    result.output = out_proj(merged);
    return result;
}

template <typename S>
EncoderLayer<S>::EncoderLayer(ParameterStore<S>& store, const std::string& name, int dim, int heads, int ffn_dim,
                              std::mt19937_64& rng)
    : norm1(store, name + ".norm1", dim),
      norm2(store, name + ".norm2", dim),
      attn(store, name + ".self_attn", dim, heads, rng),
      ffn1(store, name + ".linear1", dim, ffn_dim, rng),
      ffn2(store, name + ".linear2", ffn_dim, dim, rng) {}

template <typename S>
ad::Var<S> EncoderLayer<S>::operator()(ad::Var<S> x) const {
    const auto h = norm1(x);
    x = ad::add(x, attn(h, h).output);
    return ad::add(x, ffn2(ad::relu(ffn1(norm2(x)))));
}

template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class Conv3x3<float>;
template class Conv3x3<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class EncoderLayer<float>;
template class EncoderLayer<double>;

}  // namespace qdavpr
