#include "qdavpr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "qdavpr/feature_file.hpp"
#include "qdavpr/objective.hpp"

namespace qdavpr {

double lr_at(double epoch, const TrainConfig& cfg) {
    if (epoch < cfg.warmup_epochs) return cfg.base_lr * epoch / cfg.warmup_epochs;
    const double decays = std::floor((epoch - cfg.warmup_epochs) / cfg.decay_every);
    return cfg.base_lr * std::pow(cfg.decay_factor, decays);
}

void AdamW::step(ParameterStore<float>& store, double lr) {
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : store.all()) {
        if (!p.trainable) continue;
        auto [mit, m_new] = m_.try_emplace(name, Mat<float>::Zero(p.value.rows(), p.value.cols()));
        auto [vit, v_new] = v_.try_emplace(name, Mat<float>::Zero(p.value.rows(), p.value.cols()));
        Mat<float>& m = mit->second;
        Mat<float>& v = vit->second;
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data()[i];
            double w = p.value.data()[i];
            w -= lr * wd_ * w;
            const double mi = beta1_ * m.data()[i] + (1 - beta1_) * g;
            const double vi = beta2_ * v.data()[i] + (1 - beta2_) * g * g;
            m.data()[i] = static_cast<float>(mi);
            v.data()[i] = static_cast<float>(vi);
            w -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
            p.value.data()[i] = static_cast<float>(w);
        }
    }
}

std::vector<std::size_t> validation_rows(const DatasetManifest& m, int per_place) {
    std::map<int, std::vector<std::size_t>> by_place;
    for (std::size_t i = 0; i < m.rows.size(); ++i)
        if (m.rows[i].split == Split::Train) by_place[m.rows[i].place_id].push_back(i);
    std::vector<std::size_t> out;
    for (const auto& [place, rows] : by_place) {
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(per_place), rows.size());
        out.insert(out.end(), rows.end() - static_cast<std::ptrdiff_t>(k), rows.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::uint64_t adversarial_seed(std::uint64_t seed) { return derive_seed(seed, 0xAD7); }

double grad_norm_sq(const ParameterStore<float>& store) {
    double s = 0;
    for (const auto& [_, p] : store.all())
        if (p.trainable) s += p.grad.cast<double>().squaredNorm();
    return s;
}

void scale_grads(ParameterStore<float>& store, float f) {
    for (auto& [_, p] : store.all()) p.grad *= f;
}

}  // namespace

Trainer::Trainer(ExperimentConfig cfg, Dataset data, std::vector<LocalFeatureSet<float>> features)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      features_(std::move(features)),
      model_(cfg_.model, cfg_.train.seed),
      heads_(cfg_.model.dim, cfg_.model.blocks, cfg_.adversarial, adversarial_seed(cfg_.train.seed)),
      model_opt_(cfg_.train),
      adv_opt_(cfg_.train) {
    cfg_.validate();
    data_.manifest.validate();
    if (external()) {
        if (features_.size() != data_.manifest.rows.size())
            throw ConfigError("external-features training needs one feature set per manifest row");
        // Precomputed features admit neither pixel-level domain transforms nor backbone updates.
        cfg_.batch.augment = false;
        cfg_.train.freeze_backbone = true;
    } else if (data_.images.size() != data_.manifest.rows.size()) {
        throw ConfigError("dataset images are not aligned with manifest rows");
    }
    if (cfg_.train.freeze_backbone) model_.params().set_trainable("model/backbone", false);
    if (cfg_.train.val_per_place > 0) val_rows_ = validation_rows(data_.manifest, cfg_.train.val_per_place);
    const auto places = eligible_places(data_.manifest, cfg_.batch.per_place, val_rows_);
    if (static_cast<int>(places.size()) < cfg_.batch.places)
        throw SamplingError("need " + std::to_string(cfg_.batch.places) + " places with >= " +
                            std::to_string(cfg_.batch.per_place) + " train images, have " +
                            std::to_string(places.size()));
    steps_per_epoch_ = cfg_.train.steps_per_epoch > 0
                           ? cfg_.train.steps_per_epoch
                           : std::max(1, static_cast<int>(places.size()) / cfg_.batch.places);
}

TrainBatch Trainer::make_batch(int epoch, int step) const {
    TrainBatch b;
    b.seed = derive_seed(cfg_.train.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step));
    const auto slots = plan_batch(data_.manifest, cfg_.batch, epoch, step, cfg_.train.seed, val_rows_);
    for (const auto& slot : slots) {
        if (external()) {
            b.features.push_back(features_[slot.row]);
        } else {
            b.images.push_back(render_slot(data_, slot, cfg_.domains, cfg_.basic_augment));
        }
        b.labels.push_back(slot.place_id);
        b.domains.push_back(slot.domain);
    }
    return b;
}

LossRecord Trainer::train_step(const TrainBatch& batch, double lr) {
    const auto& w = cfg_.loss;
    ad::Tape<float> tape(true);
    ObjectiveBatch<float> ob;
    ob.images = batch.images;
    ob.features = batch.features;
    ob.labels = batch.labels;
    ob.domains = batch.domains;
    const auto terms = build_objective(tape, model_, heads_, ob, w, cfg_.local, cfg_.adversarial.grl);
    const auto& [ms, local, adv_q, adv_x, total] = terms;

    LossRecord rec;
    rec.lr = lr;
    rec.ms = ms.value()(0, 0);
    rec.local = local.value()(0, 0);
    rec.adv_query = adv_q.value()(0, 0);
    rec.adv_image = adv_x.value()(0, 0);
    rec.total = total.value()(0, 0);
    if (!std::isfinite(rec.total)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "non-finite loss (ms=%g local=%g adv_q=%g adv_x=%g), batch seed %llu", rec.ms,
                      rec.local, rec.adv_query, rec.adv_image, static_cast<unsigned long long>(batch.seed));
        throw TrainingError(buf);
    }

    model_.params().zero_grad();
    heads_.params().zero_grad();
    tape.backward(total);

    const bool update_adv = w.adv_query > 0 || w.adv_image > 0;
    if (cfg_.train.grad_clip > 0) {
        const double norm = std::sqrt(grad_norm_sq(model_.params()) + (update_adv ? grad_norm_sq(heads_.params()) : 0));
        if (norm > cfg_.train.grad_clip) {
            const auto f = static_cast<float>(cfg_.train.grad_clip / norm);
            scale_grads(model_.params(), f);
            scale_grads(heads_.params(), f);
        }
    }
    model_opt_.tick();
    model_opt_.step(model_.params(), lr);
    if (update_adv) {
        adv_opt_.tick();
        adv_opt_.step(heads_.params(), lr);
    }
    return rec;
}

double Trainer::validation_recall1() const {
    if (val_rows_.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::set<std::size_t> held(val_rows_.begin(), val_rows_.end());
    std::vector<std::size_t> db_rows;
    for (std::size_t r : data_.manifest.rows_in(Split::Train))
        if (!held.count(r)) db_rows.push_back(r);
    auto describe = [&](const std::vector<std::size_t>& rows) {
        if (external()) {
            std::vector<LocalFeatureSet<float>> f;
            for (auto r : rows) f.push_back(features_[r]);
            return model_.forward(std::span<const LocalFeatureSet<float>>(f), ForwardMode::Infer).descriptors;
        }
        std::vector<Image> imgs;
        for (auto r : rows) imgs.push_back(data_.images[r]);
        return model_.forward(std::span<const Image>(imgs), ForwardMode::Infer).descriptors;
    };
    std::vector<ManifestRow> db_meta;
    for (auto r : db_rows) db_meta.push_back(data_.manifest.rows[r]);
    const DescriptorIndex<float> index(describe(db_rows), db_meta);
    const Mat<float> q = describe(val_rows_);
    std::vector<std::vector<int>> rankings;
    std::vector<std::vector<bool>> positives;
    for (std::size_t i = 0; i < val_rows_.size(); ++i) {
        rankings.push_back(knn(index, q.row(static_cast<Eigen::Index>(i)), 1));
        std::vector<bool> mask(db_rows.size());
        for (std::size_t j = 0; j < db_rows.size(); ++j)
            mask[j] = db_meta[j].place_id == data_.manifest.rows[val_rows_[i]].place_id;
        positives.push_back(std::move(mask));
    }
    return recall_from_rankings(rankings, positives, {1}).recall[0];
}

Checkpoint Trainer::checkpoint(int epoch, double best_metric) const {
    Checkpoint c;
    c.config = cfg_;
    c.tensors = snapshot(model_.params());
    for (auto& [name, t] : snapshot(heads_.params())) c.tensors.emplace(name, std::move(t));
    c.adam_m = model_opt_.first_moments();
    c.adam_v = model_opt_.second_moments();
    for (const auto& [name, t] : adv_opt_.first_moments()) c.adam_m.emplace(name, t);
    for (const auto& [name, t] : adv_opt_.second_moments()) c.adam_v.emplace(name, t);
    c.optimizer_step = model_opt_.steps();
    c.epoch = epoch;
    c.best_metric = best_metric;
    return c;
}

TrainResult Trainer::run(const EpochCallback& on_epoch) {
    TrainResult res;
    const auto& tc = cfg_.train;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::vector<LossRecord> epoch_log;
        for (int step = 0; step < steps_per_epoch_; ++step) {
            const double lr = lr_at(epoch + static_cast<double>(step) / steps_per_epoch_, tc);
            auto rec = train_step(make_batch(epoch, step), lr);
            rec.epoch = epoch;
            rec.step = step;
            epoch_log.push_back(rec);
        }
        res.log.insert(res.log.end(), epoch_log.begin(), epoch_log.end());
        double val = std::numeric_limits<double>::quiet_NaN();
        if (!val_rows_.empty()) {
            val = validation_recall1();
            res.val_recall1.push_back(val);
            if (res.best_epoch < 0 || val > res.best_recall1) {
                res.best_epoch = epoch;
                res.best_recall1 = val;
                res.best = checkpoint(epoch, val);
            }
        }
        if (on_epoch) on_epoch(epoch, epoch_log, val);
    }
    res.last = checkpoint(tc.epochs - 1, res.best_recall1);
    if (val_rows_.empty()) {
        res.best_epoch = tc.epochs - 1;
        res.best = res.last;
    }
    return res;
}

std::string format_loss_log(const std::vector<LossRecord>& log) {
    std::ostringstream out;
    out << "epoch,step,lr,ms,local,adv_query,adv_image,total\n";
    char buf[256];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.step, r.lr, r.ms, r.local,
                      r.adv_query, r.adv_image, r.total);
        out << buf;
    }
    return out.str();
}

TrainResult train_from_config(const std::filesystem::path& config_path) {
    const auto cfg = load_config(config_path);
    const auto base = config_path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    if (cfg.train.manifest.empty()) throw ConfigError("train.manifest is required");
    Dataset ds;
    std::vector<LocalFeatureSet<float>> features;
    if (cfg.model.backbone == BackboneKind::ExternalFeatures) {
        if (cfg.train.features.empty()) throw ConfigError("train.features is required for external-features models");
        ds.manifest = read_manifest(resolve(cfg.train.manifest));
        ds.images.resize(ds.manifest.rows.size());
        features = read_feature_file(resolve(cfg.train.features));
    } else {
        ds = load_dataset(resolve(cfg.train.manifest), {Split::Train}, cfg.model.train_resize);
    }
    const auto out_dir = resolve(cfg.train.out_dir);
    std::filesystem::create_directories(out_dir);
    save_config(cfg, out_dir / "config.json");

    Trainer trainer(cfg, std::move(ds), std::move(features));
    auto res = trainer.run([](int epoch, const std::vector<LossRecord>& log, double val) {
        double total = 0;
        for (const auto& r : log) total += r.total;
        std::printf("epoch %d  loss %.6f  val R@1 %.2f\n", epoch, log.empty() ? 0.0 : total / log.size(), val);
        std::fflush(stdout);
    });
    save_checkpoint(res.best, out_dir / "best.ckpt");
    save_checkpoint(res.last, out_dir / "last.ckpt");
    std::ofstream(out_dir / "train_log.csv") << format_loss_log(res.log);
    std::ofstream val(out_dir / "val_log.csv");
    val << "epoch,recall@1\n";
    for (std::size_t e = 0; e < res.val_recall1.size(); ++e) val << e << "," << res.val_recall1[e] << "\n";
    return res;
}

void check_device_env() {
    const char* dev = std::getenv("QDAVPR_DEVICE");
    if (dev != nullptr && std::string(dev) != "cpu" && std::string(dev) != "")
        throw ConfigError(std::string("QDAVPR_DEVICE=") + dev + " is not available; only cpu is supported");
}

}  // namespace qdavpr
