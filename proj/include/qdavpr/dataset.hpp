#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qdavpr/adversarial.hpp"
#include "qdavpr/augment.hpp"
#include "qdavpr/image.hpp"

namespace qdavpr {

enum class Split { Train, Query, Db };

[[nodiscard]] std::string_view split_name(Split s);
[[nodiscard]] Split parse_split(std::string_view s);

struct ManifestRow {
    std::string image_path;
    int place_id = 0;
    std::optional<double> lat;
    std::optional<double> lon;
    std::optional<int> frame_id;
    Split split = Split::Train;

    [[nodiscard]] bool has_geo() const { return lat.has_value() && lon.has_value(); }
};

struct DatasetManifest {
    std::vector<ManifestRow> rows;

    /// place_id >= 0, and eval rows carry geo tags or a frame id.
    void validate() const;
    [[nodiscard]] std::vector<std::size_t> rows_in(Split s) const;
};

/// CSV with header image_path,place_id,lat,lon,frame_id,split; optional fields may be empty.
[[nodiscard]] DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
[[nodiscard]] std::string manifest_to_csv(const DatasetManifest& m);
[[nodiscard]] DatasetManifest manifest_from_csv(const std::string& text);

/// Manifest plus decoded images, parallel to manifest.rows (entries may be
/// empty for rows that were not loaded).
struct Dataset {
    DatasetManifest manifest;
    std::vector<Image> images;
};

/// Loads the images of the selected splits, resolving relative paths against the
/// manifest directory and resizing to `resize` x `resize` when resize > 0.
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& manifest_path, std::vector<Split> splits, int resize);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

struct BatchSpec {
    int places = 160;     // P
    int per_place = 4;    // K
    bool augment = true;  // draw each image from {original} + 6 domains, else originals only

    [[nodiscard]] int batch_size() const { return places * per_place; }
    void validate() const;
};

/// Which manifest row fills one batch slot and how it is rendered.
struct BatchSlot {
    std::size_t row = 0;
    int place_id = 0;
    DomainLabel domain;       // empty for original
    std::uint64_t seed = 0;   // transform seed
};

struct Batch {
    std::vector<BatchSlot> slots;
    std::vector<Image> images;
    std::vector<int> labels;
    std::vector<DomainLabel> domains;
};

/// Places with at least K train rows, ascending place id.
[[nodiscard]] std::vector<int> eligible_places(const DatasetManifest& m, int per_place,
                                               const std::vector<std::size_t>& exclude = {});

/// Deterministic in (manifest, spec, epoch, step, seed); every slot draws its
/// source independently and uniformly from the seven options.
[[nodiscard]] std::vector<BatchSlot> plan_batch(const DatasetManifest& m, const BatchSpec& spec, int epoch, int step,
                                                std::uint64_t seed, const std::vector<std::size_t>& exclude = {});

[[nodiscard]] Image render_slot(const Dataset& ds, const BatchSlot& slot, const DomainParams& domains,
                                const BasicAugmentConfig& basic);

[[nodiscard]] Batch sample_batch(const Dataset& ds, const BatchSpec& spec, int epoch, int step, std::uint64_t seed,
                                 const DomainParams& domains = {}, const BasicAugmentConfig& basic = {},
                                 const std::vector<std::size_t>& exclude = {});

struct ToyConfig {
    int places = 16;
    int per_place = 8;
    int image_size = 56;
    std::uint64_t seed = 0;
    int db_per_place = 1;
    int query_per_place = 1;
    double place_spacing_m = 200.0;
    double geo_jitter_m = 8.0;
};

/// Procedural places: each place is a random composition of gradients and shapes
/// on a canvas larger than the image; its images are shifted crops of it.
/// Within a place the last query_per_place images are queries, the db_per_place
/// before them database images, the rest training images.
[[nodiscard]] Dataset generate_toy_places(const ToyConfig& cfg);

}  // namespace qdavpr
