#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "qdavpr/adversarial.hpp"
#include "qdavpr/augment.hpp"
#include "qdavpr/boq.hpp"
#include "qdavpr/dataset.hpp"
#include "qdavpr/losses.hpp"

namespace qdavpr {

struct TrainConfig {
    int epochs = 40;
    int warmup_epochs = 10;
    double base_lr = 3e-4;
    int decay_every = 10;      // epochs between step decays
    double decay_factor = 0.1;
    double weight_decay = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 0.0;    // global L2 norm, 0 disables
    std::uint64_t seed = 0;
    int steps_per_epoch = 0;   // 0: one pass over the eligible places
    int val_per_place = 1;     // train rows per place held out for model selection, 0 disables
    bool freeze_backbone = false;  // forced on for external features
    std::string manifest;      // relative to the config file
    std::string features;      // optional QFEA file aligned with manifest rows
    std::string out_dir = "run";

    void validate() const;
};

/// Everything a run needs; serialised into every checkpoint.
struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
    LossWeights loss;
    LocalLossConfig local;
    BatchSpec batch;
    AdversarialConfig adversarial;
    DomainParams domains;
    BasicAugmentConfig basic_augment;

    void validate() const;
};

/// JSON text. Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] std::string config_to_json(const ExperimentConfig& cfg);
[[nodiscard]] ExperimentConfig config_from_json(const std::string& text);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace qdavpr
