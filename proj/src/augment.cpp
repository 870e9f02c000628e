#include "qdavpr/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "qdavpr/adversarial.hpp"

namespace qdavpr {

namespace {

constexpr std::array<std::string_view, kDomainCount> kNames = {"fog", "rain", "snow", "wind", "night", "sun"};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

float luma(const Image& img, int y, int x) {
    if (img.channels < 3) return img.at(0, y, x);
    return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
}

// Coarse random grid in [lo, hi], bilinearly upsampled to the image size.
std::vector<float> smooth_mask(int h, int w, int cells, double lo, double hi, std::mt19937_64& rng) {
    cells = std::max(cells, 1);
    Image coarse(1, cells + 1, cells + 1);
    for (float& v : coarse.data) v = static_cast<float>(uniform(rng, lo, hi));
    const Image up = resize_bilinear(coarse, h, w);
    return up.data;
}

Image fog(const Image& src, std::mt19937_64& rng, const DomainParams& p) {
    Image out = src;
    const double strength = uniform(rng, p.fog_strength_lo, p.fog_strength_hi);
    const double contrast = uniform(rng, p.fog_contrast_lo, p.fog_contrast_hi);
    const auto mask = smooth_mask(src.height, src.width, p.fog_mask_cells, 0.6, 1.0, rng);
    constexpr float haze = 0.95f;
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const float f = static_cast<float>(strength) * mask[static_cast<std::size_t>(y) * out.width + x];
                out.at(c, y, x) = out.at(c, y, x) * (1 - f) + haze * f;
            }
    const float mean = static_cast<float>(mean_luminance(out));
    for (float& v : out.data) v = mean + (v - mean) * static_cast<float>(contrast);
    return out;
}

Image rain(const Image& src, std::mt19937_64& rng, const DomainParams& p) {
    Image out = src;
    for (float& v : out.data) v *= static_cast<float>(p.rain_darken);
    const int count = std::max(1, static_cast<int>(std::lround(p.rain_density * src.height * src.width)));
    const double slant = uniform(rng, p.rain_slant_lo, p.rain_slant_hi);
    const double alpha = uniform(rng, p.rain_alpha_lo, p.rain_alpha_hi);
    constexpr float streak = 0.85f;
    for (int s = 0; s < count; ++s) {
        const double x0 = uniform(rng, -0.3 * src.width, src.width);
        const double y0 = uniform(rng, 0.0, src.height);
        const int len = std::max(2, static_cast<int>(uniform(rng, p.rain_length_lo, p.rain_length_hi) * src.height));
        for (int t = 0; t < len; ++t) {
            const int y = static_cast<int>(y0) + t;
            const int x = static_cast<int>(std::lround(x0 + slant * t));
            if (y < 0 || y >= src.height || x < 0 || x >= src.width) continue;
            for (int c = 0; c < out.channels; ++c)
                out.at(c, y, x) = out.at(c, y, x) * static_cast<float>(1 - alpha) + streak * static_cast<float>(alpha);
        }
    }
    return out;
}

Image snow(const Image& src, std::mt19937_64& rng, const DomainParams& p) {
    Image out = src;
    const double desat = uniform(rng, p.snow_desaturate_lo, p.snow_desaturate_hi);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const float g = luma(src, y, x);
            for (int c = 0; c < out.channels; ++c)
                out.at(c, y, x) = out.at(c, y, x) * static_cast<float>(1 - desat) + g * static_cast<float>(desat);
        }
    const int count = std::max(1, static_cast<int>(std::lround(p.snow_density * src.height * src.width)));
    for (int s = 0; s < count; ++s) {
        const int x = static_cast<int>(uniform(rng, 0, src.width));
        const int y = static_cast<int>(uniform(rng, 0, src.height));
        const float a = static_cast<float>(uniform(rng, 0.7, 1.0));
        const bool big = uniform(rng, 0, 1) < 0.3;
        for (int dy = 0; dy <= (big ? 1 : 0); ++dy)
            for (int dx = 0; dx <= (big ? 1 : 0); ++dx) {
                const int yy = std::min(y + dy, src.height - 1), xx = std::min(x + dx, src.width - 1);
                for (int c = 0; c < out.channels; ++c) out.at(c, yy, xx) = out.at(c, yy, xx) * (1 - a) + a;
            }
    }
    return out;
}

Image wind(const Image& src, std::mt19937_64& rng, const DomainParams& p) {
    Image out(src.channels, src.height, src.width);
    const int len = std::max(3, static_cast<int>(std::lround(p.wind_length_frac * src.width)));
    const double angle = uniform(rng, -p.wind_angle_deg, p.wind_angle_deg) * std::numbers::pi / 180.0;
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double half = (len - 1) / 2.0;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int c = 0; c < src.channels; ++c) {
                double acc = 0;
                for (int t = 0; t < len; ++t) {
                    const double o = t - half;
                    const int sx = std::clamp(static_cast<int>(std::lround(x + o * dx)), 0, src.width - 1);
                    const int sy = std::clamp(static_cast<int>(std::lround(y + o * dy)), 0, src.height - 1);
                    acc += src.at(c, sy, sx);
                }
                out.at(c, y, x) = static_cast<float>(acc / len);
            }
    return out;
}

Image night(const Image& src, std::mt19937_64& rng, const DomainParams& p) {
    Image out = src;
    const double gamma = uniform(rng, p.night_gamma_lo, p.night_gamma_hi);
    const double gain = uniform(rng, p.night_gain_lo, p.night_gain_hi);
    const double blue_gamma = std::max(1.0, gamma * p.night_blue_gamma_ratio);
    for (int c = 0; c < out.channels; ++c) {
        const double g = (c == 2) ? blue_gamma : gamma;
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = static_cast<float>(gain * std::pow(std::max(0.0f, src.at(c, y, x)), g));
    }
    return out;
}

Image sun(const Image& src, std::mt19937_64& rng, const DomainParams& p) {
    Image out = src;
    const double gain = uniform(rng, p.sun_gain_lo, p.sun_gain_hi);
    const double lift = uniform(rng, p.sun_lift_lo, p.sun_lift_hi);
    const double flare = uniform(rng, p.sun_flare_lo, p.sun_flare_hi);
    const double sigma = uniform(rng, p.sun_radius_lo, p.sun_radius_hi) * std::max(src.height, src.width);
    const double cx = uniform(rng, 0, src.width);
    const double cy = uniform(rng, 0, 0.5 * src.height);
    constexpr std::array<float, 3> tint = {1.0f, 0.95f, 0.8f};
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const double f = flare * std::exp(-r2 / (2 * sigma * sigma));
            for (int c = 0; c < out.channels; ++c)
                out.at(c, y, x) = static_cast<float>(src.at(c, y, x) * gain + lift + f * tint[std::min(c, 2)]);
        }
    return out;
}

}  // namespace

std::string_view domain_name(int domain_id) {
    if (domain_id < 0 || domain_id >= kDomainCount) throw DomainError("domain id out of range: " + std::to_string(domain_id));
    return kNames[domain_id];
}

int parse_domain(std::string_view name) {
    for (int i = 0; i < kDomainCount; ++i)
        if (kNames[i] == name) return i;
    throw DomainError("unknown domain: " + std::string(name));
}

std::vector<int> parse_domain_list(std::string_view csv) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const auto end = std::min(csv.find(',', start), csv.size());
        if (end > start) out.push_back(parse_domain(csv.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

Image apply_domain(const Image& img, int domain_id, std::uint64_t seed, const DomainParams& params) {
    if (domain_id < 0 || domain_id >= kDomainCount)
        throw DomainError("domain id must be in 0..5, got " + std::to_string(domain_id));
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(domain_id) + 1));
    Image out;
    switch (static_cast<SyntheticDomain>(domain_id)) {
        case SyntheticDomain::Fog: out = fog(img, rng, params); break;
        case SyntheticDomain::Rain: out = rain(img, rng, params); break;
        case SyntheticDomain::Snow: out = snow(img, rng, params); break;
        case SyntheticDomain::Wind: out = wind(img, rng, params); break;
        case SyntheticDomain::Night: out = night(img, rng, params); break;
        case SyntheticDomain::Sun: out = sun(img, rng, params); break;
    }
    clamp01(out);
    return out;
}

Image basic_augment(const Image& img, std::uint64_t seed, const BasicAugmentConfig& cfg) {
    if (!cfg.enabled) return img;
    std::mt19937_64 rng(derive_seed(seed, 0xA11C));
    const double frac = uniform(rng, cfg.crop_scale_lo, 1.0);
    const int ch = std::max(1, static_cast<int>(img.height * frac));
    const int cw = std::max(1, static_cast<int>(img.width * frac));
    const int oy = static_cast<int>(uniform(rng, 0, img.height - ch + 1));
    const int ox = static_cast<int>(uniform(rng, 0, img.width - cw + 1));
    Image crop(img.channels, ch, cw);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) crop.at(c, y, x) = img.at(c, std::min(oy + y, img.height - 1), std::min(ox + x, img.width - 1));
    Image out = resize_bilinear(crop, img.height, img.width);

    const float b = static_cast<float>(uniform(rng, -cfg.brightness, cfg.brightness));
    const float k = static_cast<float>(1 + uniform(rng, -cfg.contrast, cfg.contrast));
    const float s = static_cast<float>(1 + uniform(rng, -cfg.saturation, cfg.saturation));
    const float mean = static_cast<float>(mean_luminance(out));
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const float g = luma(out, y, x);
            for (int c = 0; c < out.channels; ++c) {
                float v = g + (out.at(c, y, x) - g) * s;
                v = mean + (v - mean) * k + b;
                out.at(c, y, x) = v;
            }
        }
    clamp01(out);
    return out;
}

}  // namespace qdavpr
