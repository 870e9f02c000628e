#include "qdavpr/dataset.hpp"

#include <limits>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace qdavpr {

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Query: return "query";
        case Split::Db: return "db";
    }
    return "train";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "query") return Split::Query;
    if (s == "db") return Split::Db;
    throw IoError("unknown split: " + std::string(s));
}

void DatasetManifest::validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.place_id < 0) throw IoError("manifest row " + std::to_string(i) + ": negative place_id");
        if (r.split != Split::Train && !r.has_geo() && !r.frame_id)
            throw IoError("manifest row " + std::to_string(i) + ": eval rows need lat/lon or frame_id");
    }
}

std::vector<std::size_t> DatasetManifest::rows_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].split == s) out.push_back(i);
    return out;
}

namespace {

constexpr const char* kHeader = "image_path,place_id,lat,lon,frame_id,split";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && s[i] == ' ') ++i;
    return s.substr(i);
}

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(std::numeric_limits<double>::max_digits10);
    ss << v;
    return ss.str();
}

}  // namespace

DatasetManifest manifest_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kHeader)
        throw IoError(std::string("manifest header must be: ") + kHeader);
    DatasetManifest m;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 6) throw IoError("manifest line " + std::to_string(lineno) + ": expected 6 fields");
        for (auto& s : f) s = trim(s);
        try {
            ManifestRow r;
            r.image_path = f[0];
            r.place_id = std::stoi(f[1]);
            if (!f[2].empty()) r.lat = std::stod(f[2]);
            if (!f[3].empty()) r.lon = std::stod(f[3]);
            if (!f[4].empty()) r.frame_id = std::stoi(f[4]);
            r.split = parse_split(f[5]);
            m.rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw IoError("manifest line " + std::to_string(lineno) + ": malformed field");
        }
    }
    m.validate();
    return m;
}

std::string manifest_to_csv(const DatasetManifest& m) {
    std::ostringstream out;
    out << kHeader << "\n";
    for (const auto& r : m.rows) {
        out << r.image_path << "," << r.place_id << ",";
        if (r.lat) out << fmt_double(*r.lat);
        out << ",";
        if (r.lon) out << fmt_double(*r.lon);
        out << ",";
        if (r.frame_id) out << *r.frame_id;
        out << "," << split_name(r.split) << "\n";
    }
    return out.str();
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return manifest_from_csv(ss.str());
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << manifest_to_csv(m);
}

Dataset load_dataset(const std::filesystem::path& manifest_path, std::vector<Split> splits, int resize) {
    Dataset ds;
    ds.manifest = read_manifest(manifest_path);
    ds.images.resize(ds.manifest.rows.size());
    const auto base = manifest_path.parent_path();
    for (std::size_t i = 0; i < ds.manifest.rows.size(); ++i) {
        const auto& r = ds.manifest.rows[i];
        if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) continue;
        std::filesystem::path p = r.image_path;
        if (p.is_relative()) p = base / p;
        Image img = read_pnm(p);
        if (resize > 0) img = resize_bilinear(img, resize, resize);
        ds.images[i] = std::move(img);
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < ds.manifest.rows.size(); ++i) {
        if (i < ds.images.size() && !ds.images[i].empty())
            write_pnm(ds.images[i], dir / ds.manifest.rows[i].image_path);
    }
    write_manifest(ds.manifest, dir / "manifest.csv");
}

void BatchSpec::validate() const {
    if (places < 1 || per_place < 1) throw ConfigError("batch.places and batch.per_place must be >= 1");
}

namespace {

std::map<int, std::vector<std::size_t>> train_rows_by_place(const DatasetManifest& m,
                                                            const std::vector<std::size_t>& exclude) {
    std::map<int, std::vector<std::size_t>> by_place;
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        if (m.rows[i].split != Split::Train) continue;
        if (std::find(exclude.begin(), exclude.end(), i) != exclude.end()) continue;
        by_place[m.rows[i].place_id].push_back(i);
    }
    return by_place;
}

}  // namespace

std::vector<int> eligible_places(const DatasetManifest& m, int per_place, const std::vector<std::size_t>& exclude) {
    std::vector<int> out;
    for (const auto& [place, rows] : train_rows_by_place(m, exclude))
        if (static_cast<int>(rows.size()) >= per_place) out.push_back(place);
    return out;
}

std::vector<BatchSlot> plan_batch(const DatasetManifest& m, const BatchSpec& spec, int epoch, int step,
                                  std::uint64_t seed, const std::vector<std::size_t>& exclude) {
    spec.validate();
    const auto by_place = train_rows_by_place(m, exclude);
    std::vector<int> places;
    for (const auto& [place, rows] : by_place)
        if (static_cast<int>(rows.size()) >= spec.per_place) places.push_back(place);
    if (static_cast<int>(places.size()) < spec.places)
        throw SamplingError("need " + std::to_string(spec.places) + " places with >= " +
                            std::to_string(spec.per_place) + " train images, have " + std::to_string(places.size()));

    std::mt19937_64 epoch_rng(derive_seed(seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
    std::shuffle(places.begin(), places.end(), epoch_rng);

    std::vector<BatchSlot> slots;
    slots.reserve(static_cast<std::size_t>(spec.batch_size()));
    const std::size_t n = places.size();
    for (int p = 0; p < spec.places; ++p) {
        const int place = places[(static_cast<std::size_t>(step) * spec.places + p) % n];
        std::vector<std::size_t> rows = by_place.at(place);
        std::mt19937_64 pick(derive_seed(seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step),
                                         0x9000000ull + static_cast<std::uint64_t>(place)));
        std::shuffle(rows.begin(), rows.end(), pick);
        for (int k = 0; k < spec.per_place; ++k) {
            const std::uint64_t index = slots.size();
            const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step),
                                                index);
            BatchSlot slot;
            slot.row = rows[k];
            slot.place_id = place;
            slot.seed = mix_seed(s ^ 0x7A11);
            if (spec.augment) {
                std::mt19937_64 src(s);
                const int source = std::uniform_int_distribution<int>(0, kDomainCount)(src);
                if (source > 0) slot.domain = source - 1;
            }
            slots.push_back(slot);
        }
    }
    return slots;
}

Image render_slot(const Dataset& ds, const BatchSlot& slot, const DomainParams& domains,
                  const BasicAugmentConfig& basic) {
    const Image& src = ds.images.at(slot.row);
    if (src.empty()) throw SamplingError("image for manifest row " + std::to_string(slot.row) + " is not loaded");
    Image img = slot.domain ? apply_domain(src, *slot.domain, slot.seed, domains) : src;
    return basic_augment(img, slot.seed, basic);
}

Batch sample_batch(const Dataset& ds, const BatchSpec& spec, int epoch, int step, std::uint64_t seed,
                   const DomainParams& domains, const BasicAugmentConfig& basic,
                   const std::vector<std::size_t>& exclude) {
    Batch b;
    b.slots = plan_batch(ds.manifest, spec, epoch, step, seed, exclude);
    for (const auto& s : b.slots) {
        b.images.push_back(render_slot(ds, s, domains, basic));
        b.labels.push_back(s.place_id);
        b.domains.push_back(s.domain);
    }
    return b;
}

// ---- toy places -------------------------------------------------------------------

namespace {

using Rgb = std::array<float, 3>;

Rgb random_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.05f, 0.95f);
    return {u(rng), u(rng), u(rng)};
}

Image draw_place_canvas(int size, std::mt19937_64& rng) {
    Image canvas(3, size, size);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Rgb c0 = random_color(rng), c1 = random_color(rng);
    const double angle = u(rng) * 2 * std::numbers::pi;
    const double gx = std::cos(angle), gy = std::sin(angle);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = std::clamp(0.5 + ((x - size / 2.0) * gx + (y - size / 2.0) * gy) / size, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) canvas.at(c, y, x) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
        }

    const int shapes = 4 + static_cast<int>(u(rng) * 4);
    for (int s = 0; s < shapes; ++s) {
        const Rgb col = random_color(rng);
        const Rgb col2 = random_color(rng);
        const int kind = static_cast<int>(u(rng) * 4);
        const double cx = u(rng) * size, cy = u(rng) * size;
        const double r = (0.08 + 0.17 * u(rng)) * size;
        const double period = (0.04 + 0.06 * u(rng)) * size;
        const double sa = u(rng) * std::numbers::pi;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                bool inside = false;
                const Rgb* fill = &col;
                switch (kind) {
                    case 0: inside = std::abs(dx) < r && std::abs(dy) < 0.6 * r; break;  // rectangle
                    case 1: inside = dx * dx + dy * dy < r * r; break;                   // disc
                    case 2: {                                                            // striped patch
                        inside = std::abs(dx) < r && std::abs(dy) < r;
                        const double proj = dx * std::cos(sa) + dy * std::sin(sa);
                        if (static_cast<int>(std::floor(proj / period)) % 2 == 0) fill = &col2;
                        break;
                    }
                    default: {  // checker patch
                        inside = std::abs(dx) < r && std::abs(dy) < r;
                        const int ix = static_cast<int>(std::floor(dx / period));
                        const int iy = static_cast<int>(std::floor(dy / period));
                        if ((ix + iy) % 2 == 0) fill = &col2;
                        break;
                    }
                }
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) canvas.at(c, y, x) = (*fill)[c];
            }
    }
    return canvas;
}

constexpr double kEarthRadiusM = 6371000.0;

}  // namespace

Dataset generate_toy_places(const ToyConfig& cfg) {
    if (cfg.places < 2) throw ConfigError("toy generator needs at least 2 places");
    if (cfg.per_place < 1 || cfg.image_size < 1) throw ConfigError("toy generator: bad image counts or size");
    Dataset ds;
    const int canvas_size = cfg.image_size + cfg.image_size / 4;
    const int max_shift = canvas_size - cfg.image_size;
    const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.places))));
    const double deg_per_m = 180.0 / (std::numbers::pi * kEarthRadiusM);

    for (int p = 0; p < cfg.places; ++p) {
        std::mt19937_64 rng(derive_seed(cfg.seed, 0x7011, static_cast<std::uint64_t>(p)));
        const Image canvas = draw_place_canvas(canvas_size, rng);
        const double lat0 = (p / grid_cols) * cfg.place_spacing_m * deg_per_m;
        const double lon0 = (p % grid_cols) * cfg.place_spacing_m * deg_per_m / std::cos(lat0 * std::numbers::pi / 180.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int j = 0; j < cfg.per_place; ++j) {
            const int ox = static_cast<int>(u(rng) * (max_shift + 1));
            const int oy = static_cast<int>(u(rng) * (max_shift + 1));
            const float gain = static_cast<float>(0.95 + 0.1 * u(rng));
            std::normal_distribution<float> noise(0.0f, 0.01f);
            Image img(3, cfg.image_size, cfg.image_size);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < cfg.image_size; ++y)
                    for (int x = 0; x < cfg.image_size; ++x) {
                        const float v = std::clamp(canvas.at(c, std::min(y + oy, canvas_size - 1),
                                                             std::min(x + ox, canvas_size - 1)) * gain + noise(rng),
                                                   0.0f, 1.0f);
                        // 8-bit quantised so that in-memory and on-disk datasets agree.
                        img.at(c, y, x) = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
                    }

            // Uniform offset inside a disc of radius geo_jitter_m.
            const double rr = cfg.geo_jitter_m * std::sqrt(u(rng));
            const double th = u(rng) * 2 * std::numbers::pi;
            ManifestRow row;
            char name[64];
            std::snprintf(name, sizeof(name), "place_%04d_%02d.ppm", p, j);
            row.image_path = name;
            row.place_id = p;
            row.lat = lat0 + rr * std::sin(th) * deg_per_m;
            row.lon = lon0 + rr * std::cos(th) * deg_per_m / std::cos(*row.lat * std::numbers::pi / 180.0);
            row.frame_id = p * 100 + j;
            const int from_end = cfg.per_place - 1 - j;
            if (from_end < cfg.query_per_place) row.split = Split::Query;
            else if (from_end < cfg.query_per_place + cfg.db_per_place) row.split = Split::Db;
            else row.split = Split::Train;
            ds.manifest.rows.push_back(std::move(row));
            ds.images.push_back(std::move(img));
        }
    }
    return ds;
}

}  // namespace qdavpr
