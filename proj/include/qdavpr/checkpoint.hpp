#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "qdavpr/config.hpp"

namespace qdavpr {

/// "QCKP", u32 version, config JSON (u64 length + bytes), named tensors
/// (name, u32 rows, u32 cols, row-major float32 LE), optimizer moments as two
/// more tensor lists, u64 optimizer step, i32 epoch, f64 best metric.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Mat<float>>;

struct Checkpoint {
    ExperimentConfig config;
    TensorMap tensors;     // "model/..." and, unless stripped, "adv/..."
    TensorMap adam_m;      // keyed like `tensors`
    TensorMap adam_v;
    std::uint64_t optimizer_step = 0;
    int epoch = -1;
    double best_metric = 0.0;

    [[nodiscard]] bool has_adversarial() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Drops every "adv/" tensor and its optimizer state.
void strip_adversarial(Checkpoint& ckpt);

[[nodiscard]] TensorMap snapshot(const ParameterStore<float>& store);
/// Copies tensors into same-named parameters. Every parameter must be present
/// with a matching shape; tensors outside `store` are ignored.
void restore(ParameterStore<float>& store, const TensorMap& tensors);

/// Model rebuilt from the checkpoint's config and tensors.
[[nodiscard]] BoQModel<float> load_model(const Checkpoint& ckpt);

}  // namespace qdavpr
