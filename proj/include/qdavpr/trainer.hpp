#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qdavpr/checkpoint.hpp"
#include "qdavpr/config.hpp"
#include "qdavpr/retrieval.hpp"

namespace qdavpr {

/// Linear warmup from 0 over warmup_epochs, then base_lr * factor^floor((e - warmup) / decay_every).
[[nodiscard]] double lr_at(double epoch, const TrainConfig& cfg);

/// Adam with decoupled weight decay (p <- p - lr * wd * p before the moment update).
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(const TrainConfig& cfg) : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), wd_(cfg.weight_decay) {}

    /// Updates every trainable parameter of `store` from its grad buffer.
    void step(ParameterStore<float>& store, double lr);
    /// Advances the shared step counter; call once per optimizer step, before step().
    void tick() { ++t_; }

    [[nodiscard]] std::uint64_t steps() const { return t_; }
    TensorMap& first_moments() { return m_; }
    TensorMap& second_moments() { return v_; }
    const TensorMap& first_moments() const { return m_; }
    const TensorMap& second_moments() const { return v_; }
    void set_steps(std::uint64_t t) { t_ = t; }

private:
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, wd_ = 0.0;
    std::uint64_t t_ = 0;
    TensorMap m_, v_;
};

struct LossRecord {
    int epoch = 0;
    int step = 0;
    double lr = 0;
    double ms = 0;
    double local = 0;
    double adv_query = 0;
    double adv_image = 0;
    double total = 0;
};

/// One training batch. Exactly one of images / features is filled.
struct TrainBatch {
    std::vector<Image> images;
    std::vector<LocalFeatureSet<float>> features;
    std::vector<int> labels;
    std::vector<DomainLabel> domains;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
};

/// Per place, the last `per_place` train rows by manifest order.
[[nodiscard]] std::vector<std::size_t> validation_rows(const DatasetManifest& m, int per_place);

struct TrainResult {
    std::vector<LossRecord> log;
    std::vector<double> val_recall1;  // per epoch, empty without a validation split
    int best_epoch = -1;
    double best_recall1 = 0;
    Checkpoint best;
    Checkpoint last;
};

class Trainer {
public:
    /// `data` holds the train split images (manifest rows of other splits may be empty).
    /// In external-features mode `features` is aligned with the manifest rows instead.
    Trainer(ExperimentConfig cfg, Dataset data, std::vector<LocalFeatureSet<float>> features = {});

    [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
    BoQModel<float>& model() { return model_; }
    AdversarialHeads<float>& heads() { return heads_; }
    [[nodiscard]] int steps_per_epoch() const { return steps_per_epoch_; }
    [[nodiscard]] const std::vector<std::size_t>& held_out() const { return val_rows_; }

    [[nodiscard]] TrainBatch make_batch(int epoch, int step) const;
    /// Forward, all four losses, backward and one AdamW step.
    LossRecord train_step(const TrainBatch& batch, double lr);
    /// R@1 of held-out train rows against the remaining train rows, positives by place id.
    [[nodiscard]] double validation_recall1() const;

    [[nodiscard]] Checkpoint checkpoint(int epoch, double best_metric) const;

    using EpochCallback = std::function<void(int epoch, const std::vector<LossRecord>& epoch_log, double val_r1)>;
    TrainResult run(const EpochCallback& on_epoch = {});

private:
    [[nodiscard]] bool external() const { return cfg_.model.backbone == BackboneKind::ExternalFeatures; }

    ExperimentConfig cfg_;
    Dataset data_;
    std::vector<LocalFeatureSet<float>> features_;
    BoQModel<float> model_;
    AdversarialHeads<float> heads_;
    AdamW model_opt_, adv_opt_;
    std::vector<std::size_t> val_rows_;
    int steps_per_epoch_ = 1;
};

/// CSV with header epoch,step,lr,ms,local,adv_query,adv_image,total.
[[nodiscard]] std::string format_loss_log(const std::vector<LossRecord>& log);

/// Runs `train --config`: loads the manifest (and features), trains, writes
/// best.ckpt, last.ckpt, train_log.csv and val_log.csv into out_dir.
TrainResult train_from_config(const std::filesystem::path& config_path);

// ---- evaluation -----------------------------------------------------------------

struct EvalOptions {
    EvalProtocol protocol;
    int resize = 0;        // 0: the model's eval_resize
    int pca_dim = 0;       // 0: full descriptor
    bool pca_whiten = false;
    std::string features;  // QFEA file aligned with manifest rows (external-features models)
};

struct EvalResult {
    RecallReport report;
    Mat<float> db_descriptors;
    Mat<float> query_descriptors;
    std::vector<ManifestRow> db_meta, query_meta;
};

[[nodiscard]] Mat<float> compute_descriptors(const BoQModel<float>& model, std::span<const Image> images);

/// Query and db descriptors in inference mode, optional PCA fitted on the db set, Recall@N.
[[nodiscard]] EvalResult evaluate(const BoQModel<float>& model, const Dataset& ds, const EvalOptions& opts);
[[nodiscard]] EvalResult evaluate(const BoQModel<float>& model, const DatasetManifest& m,
                                  const std::vector<LocalFeatureSet<float>>& features, const EvalOptions& opts);
[[nodiscard]] EvalResult evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest,
                                  const EvalOptions& opts);

/// Writes block{l}_attention.pgm (query-averaged map upsampled to the image) and
/// block{l}_attention.csv (M rows of N raw weights) for every block. The image is
/// resized to the model's eval_resize first. Returns the written paths.
std::vector<std::filesystem::path> dump_attention(const BoQModel<float>& model, const Image& image,
                                                  const std::filesystem::path& out_dir);

/// Only "cpu" (or unset) is accepted for QDAVPR_DEVICE.
void check_device_env();

}  // namespace qdavpr
