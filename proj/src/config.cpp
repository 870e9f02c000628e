#include "qdavpr/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qdavpr {

NLOHMANN_JSON_SERIALIZE_ENUM(BackboneKind, {{BackboneKind::Toy, "toy"},
                                            {BackboneKind::ExternalFeatures, "external-features"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, blocks, queries, dim, combinations, encoder_heads,
                                                encoder_ffn_dim, backbone, patch_size, backbone_layers, external_dim,
                                                train_resize, eval_resize)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, warmup_epochs, base_lr, decay_every,
                                                decay_factor, weight_decay, beta1, beta2, adam_eps, grad_clip, seed,
                                                steps_per_epoch, val_per_place, freeze_backbone, manifest, features,
                                                out_dir)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, local, adv_query, adv_image, ms_alpha, ms_beta, ms_base,
                                                miner_epsilon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LocalLossConfig, alpha, pool_size, top_k)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BatchSpec, places, per_place, augment)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GRLConfig, lambda)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdversarialConfig, hidden, grl)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    DomainParams, fog_strength_lo, fog_strength_hi, fog_contrast_lo, fog_contrast_hi, fog_mask_cells, rain_density,
    rain_length_lo, rain_length_hi, rain_slant_lo, rain_slant_hi, rain_alpha_lo, rain_alpha_hi, rain_darken,
    snow_desaturate_lo, snow_desaturate_hi, snow_density, wind_length_frac, wind_angle_deg, night_gamma_lo,
    night_gamma_hi, night_gain_lo, night_gain_hi, night_blue_gamma_ratio, sun_gain_lo, sun_gain_hi, sun_lift_lo,
    sun_lift_hi, sun_flare_lo, sun_flare_hi, sun_radius_lo, sun_radius_hi)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BasicAugmentConfig, enabled, crop_scale_lo, brightness, contrast,
                                                saturation)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentConfig, model, train, loss, local, batch, adversarial,
                                                domains, basic_augment)

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs > epochs) throw ConfigError("warmup_epochs must lie in [0, epochs]");
    if (!(base_lr > 0)) throw ConfigError("base_lr must be > 0");
    if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
    if (!(decay_factor > 0 && decay_factor <= 1)) throw ConfigError("decay_factor must lie in (0, 1]");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
    if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
    if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
    if (val_per_place < 0) throw ConfigError("val_per_place must be >= 0");
}

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    loss.validate();
    local.validate();
    batch.validate();
    if (local.top_k > model.combinations)
        throw ConfigError("local.top_k must not exceed model.combinations");
    if (adversarial.hidden < 1) throw ConfigError("adversarial.hidden must be >= 1");
    if (!std::isfinite(adversarial.grl.lambda)) throw ConfigError("grl lambda must be finite");
}

namespace {

void reject_unknown(const nlohmann::json& given, const nlohmann::json& reference, const std::string& path) {
    if (!given.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        const auto it = reference.find(key);
        if (it == reference.end()) throw ConfigError("unknown config key: " + path + key);
        if (it->is_object()) reject_unknown(value, *it, path + key + ".");
    }
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return nlohmann::json(cfg).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, nlohmann::json(ExperimentConfig{}), "");
    try {
        auto cfg = j.get<ExperimentConfig>();
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config: " + path.string());
    out << config_to_json(cfg) << "\n";
}

}  // namespace qdavpr
