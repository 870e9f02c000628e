#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qdavpr/image.hpp"

namespace qdavpr {

enum class SyntheticDomain : int { Fog = 0, Rain = 1, Snow = 2, Wind = 3, Night = 4, Sun = 5 };

[[nodiscard]] std::string_view domain_name(int domain_id);
/// Accepts the lowercase names fog, rain, snow, wind, night, sun.
[[nodiscard]] int parse_domain(std::string_view name);
[[nodiscard]] std::vector<int> parse_domain_list(std::string_view csv);

/// Parameter ranges of the six parametric weather/illumination transforms.
/// Each pair is a [lo, hi] interval sampled uniformly per call.
struct DomainParams {
    // fog: blend toward a haze colour under a low-frequency mask, then reduce contrast
    double fog_strength_lo = 0.35, fog_strength_hi = 0.6;
    double fog_contrast_lo = 0.6, fog_contrast_hi = 0.85;
    int fog_mask_cells = 4;
    // rain: diagonal semi-transparent streaks over a slightly darkened image
    double rain_density = 0.015;  // streaks per pixel
    double rain_length_lo = 0.1, rain_length_hi = 0.25;  // fraction of image height
    double rain_slant_lo = 0.2, rain_slant_hi = 0.5;     // dx per dy
    double rain_alpha_lo = 0.3, rain_alpha_hi = 0.55;
    double rain_darken = 0.9;
    // snow: desaturation followed by bright speckles
    double snow_desaturate_lo = 0.2, snow_desaturate_hi = 0.4;
    double snow_density = 0.03;
    // wind: directional motion blur
    double wind_length_frac = 0.12;  // kernel length as a fraction of width
    double wind_angle_deg = 20.0;    // max deviation from horizontal
    // night: gamma darkening with blue attenuated less than red/green
    double night_gamma_lo = 2.0, night_gamma_hi = 3.0;
    double night_gain_lo = 0.4, night_gain_hi = 0.6;
    double night_blue_gamma_ratio = 0.75;
    // sun: gain + lift and a warm radial flare
    double sun_gain_lo = 1.1, sun_gain_hi = 1.3;
    double sun_lift_lo = 0.05, sun_lift_hi = 0.15;
    double sun_flare_lo = 0.3, sun_flare_hi = 0.6;
    double sun_radius_lo = 0.2, sun_radius_hi = 0.4;  // fraction of the image side
};

/// Deterministic in (image, domain_id, seed). Output has the input's shape and lies in [0, 1].
[[nodiscard]] Image apply_domain(const Image& img, int domain_id, std::uint64_t seed, const DomainParams& params = {});

/// Random crop + colour jitter applied after the domain transform.
struct BasicAugmentConfig {
    bool enabled = false;
    double crop_scale_lo = 0.8;  // side fraction of the crop
    double brightness = 0.1;
    double contrast = 0.1;
    double saturation = 0.1;
};

[[nodiscard]] Image basic_augment(const Image& img, std::uint64_t seed, const BasicAugmentConfig& cfg);

}  // namespace qdavpr
