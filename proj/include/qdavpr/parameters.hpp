#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "qdavpr/types.hpp"

namespace qdavpr {

template <typename Scalar>
struct Parameter {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    bool trainable = true;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Named parameter tensors. Entries have stable addresses for the lifetime of
/// the store, so layers keep raw pointers to their own parameters.
template <typename Scalar>
class ParameterStore {
public:
    using Map = std::map<std::string, Parameter<Scalar>>;

    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    Parameter<Scalar>& create(const std::string& name, Mat<Scalar> value) {
        auto [it, inserted] = params_.try_emplace(name);
        if (!inserted) throw ConfigError("duplicate parameter name: " + name);
        it->second.value = std::move(value);
        it->second.zero_grad();
        return it->second;
    }

    [[nodiscard]] Parameter<Scalar>* find(const std::string& name) {
        auto it = params_.find(name);
        return it == params_.end() ? nullptr : &it->second;
    }

    [[nodiscard]] const Parameter<Scalar>* find(const std::string& name) const {
        auto it = params_.find(name);
        return it == params_.end() ? nullptr : &it->second;
    }

    Map& all() { return params_; }
    const Map& all() const { return params_; }

    void zero_grad() {
        for (auto& [_, p] : params_) p.zero_grad();
    }

    /// Marks every parameter whose name starts with `prefix`.
    void set_trainable(const std::string& prefix, bool trainable) {
        for (auto& [name, p] : params_)
            if (name.rfind(prefix, 0) == 0) p.trainable = trainable;
    }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
        return n;
    }

private:
    Map params_;
};

namespace init {

template <typename Scalar>
Mat<Scalar> uniform(int rows, int cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
    return m;
}

template <typename Scalar>
Mat<Scalar> normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
    return m;
}

// PyTorch's default nn.Linear / nn.Conv2d bound: 1/sqrt(fan_in).
template <typename Scalar>
Mat<Scalar> fan_in_uniform(int rows, int cols, int fan_in, std::mt19937_64& rng) {
    return uniform<Scalar>(rows, cols, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace init

}  // namespace qdavpr
