#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qdavpr {

// Row-major so that a token grid (N x d) is stored position by position and
// flattening a combination matrix yields the concatenated descriptor.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matf = Mat<float>;
using Matd = Mat<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or out-of-range configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Synthetic domain id outside {0..5}.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Evaluation protocol and metadata do not match.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Not enough places or images to fill a batch.
class SamplingError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during training.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Spatial extent of a token grid; rows of a token matrix are indexed y * width + x.
struct Grid {
    int height = 0;
    int width = 0;
    [[nodiscard]] int size() const { return height * width; }
    bool operator==(const Grid&) const = default;
};

/// SplitMix64 finaliser, used to derive independent per-sample seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
    return mix_seed(mix_seed(mix_seed(mix_seed(seed) ^ a) ^ b) ^ c);
}

}  // namespace qdavpr
