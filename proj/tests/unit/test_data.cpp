#include <doctest.h>

#include <filesystem>
#include <map>

#include "helpers.hpp"
#include "qdavpr/augment.hpp"
#include "qdavpr/dataset.hpp"

using namespace qdavpr;

namespace {

Image random_image(std::uint64_t seed, int h = 24, int w = 24) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(3, h, w);
    for (auto& v : img.data) v = u(rng);
    return img;
}

const Dataset& small_toy() {
    static const Dataset ds = [] {
        ToyConfig c;
        c.places = 16;
        c.per_place = 8;
        c.image_size = 28;
        c.seed = 5;
        return generate_toy_places(c);
    }();
    return ds;
}

}  // namespace

TEST_CASE("domain transforms are deterministic in (image, domain, seed)") {
    const Image img = random_image(1);
    for (int d = 0; d < kDomainCount; ++d) {
        CHECK(apply_domain(img, d, 42) == apply_domain(img, d, 42));
        CHECK_FALSE(apply_domain(img, d, 42) == img);
    }
}

TEST_CASE("night darkens any non-black image") {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Image img = random_image(100 + s);
        CHECK(mean_luminance(apply_domain(img, 4, s)) < mean_luminance(img));
    }
    Image grey(3, 8, 8, 0.5f);
    CHECK(mean_luminance(apply_domain(grey, 4, 3)) < 0.5);
    // At zero luminance a darkening cannot be strict.
    Image black(3, 8, 8, 0.0f);
    CHECK(mean_luminance(apply_domain(black, 4, 3)) == 0.0);
}

TEST_CASE("domain id outside 0..5 is a domain error") {
    const Image img = random_image(2);
    CHECK_THROWS_AS((void)apply_domain(img, 6, 0), DomainError);
    CHECK_THROWS_AS((void)apply_domain(img, -1, 0), DomainError);
}

TEST_CASE("domain names round trip") {
    for (int d = 0; d < kDomainCount; ++d) CHECK(parse_domain(domain_name(d)) == d);
    CHECK(parse_domain_list("fog,rain,snow,wind,night,sun") == std::vector<int>{0, 1, 2, 3, 4, 5});
    CHECK_THROWS_AS((void)parse_domain("hail"), DomainError);
}

TEST_CASE("property: transforms preserve shape and the [0, 1] range") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Image img = random_image(200 + s, 17 + static_cast<int>(s), 31);
        for (int d = 0; d < kDomainCount; ++d) {
            const Image out = apply_domain(img, d, s * 7 + d);
            CHECK(out.channels == img.channels);
            CHECK(out.height == img.height);
            CHECK(out.width == img.width);
            CHECK(*std::min_element(out.data.begin(), out.data.end()) >= 0.0f);
            CHECK(*std::max_element(out.data.begin(), out.data.end()) <= 1.0f);
        }
        BasicAugmentConfig b;
        b.enabled = true;
        const Image out = basic_augment(img, s, b);
        CHECK(out.height == img.height);
        CHECK(out.width == img.width);
        CHECK(*std::max_element(out.data.begin(), out.data.end()) <= 1.0f);
    }
}

TEST_CASE("batch of 160 places by 4 images has 640 slots") {
    ToyConfig c;
    c.places = 160;
    c.per_place = 6;  // 4 train rows after one db and one query image
    c.image_size = 8;
    const auto ds = generate_toy_places(c);
    const auto slots = plan_batch(ds.manifest, BatchSpec{}, 0, 0, 1);
    CHECK(BatchSpec{}.batch_size() == 640);
    CHECK(slots.size() == 640);
    std::set<int> places;
    for (const auto& s : slots) places.insert(s.place_id);
    CHECK(places.size() == 160);
}

TEST_CASE("P=2, K=2 labels are two adjacent pairs") {
    BatchSpec spec{2, 2, true};
    const auto b = sample_batch(small_toy(), spec, 0, 0, 9);
    REQUIRE(b.labels.size() == 4);
    CHECK(b.labels[0] == b.labels[1]);
    CHECK(b.labels[2] == b.labels[3]);
    CHECK(b.labels[0] != b.labels[2]);
}

TEST_CASE("too few eligible places is a sampling error") {
    BatchSpec spec{17, 2, true};
    CHECK_THROWS_AS((void)plan_batch(small_toy().manifest, spec, 0, 0, 1), SamplingError);
    spec = {4, 7, true};  // 6 train rows per place
    CHECK_THROWS_AS((void)plan_batch(small_toy().manifest, spec, 0, 0, 1), SamplingError);
}

TEST_CASE("the seven sources are drawn uniformly") {
    BatchSpec spec{16, 4, true};
    std::array<int, kDomainCount + 1> counts{};
    int total = 0;
    for (int step = 0; total < 10000; ++step)
        for (const auto& s : plan_batch(small_toy().manifest, spec, step / 10, step % 10, 3)) {
            ++counts[s.domain ? *s.domain + 1 : 0];
            ++total;
        }
    for (int c : counts) CHECK(std::abs(static_cast<double>(c) / total - 1.0 / 7.0) < 0.02);
}

TEST_CASE("augment off keeps every slot original") {
    BatchSpec spec{8, 4, false};
    for (const auto& s : plan_batch(small_toy().manifest, spec, 1, 2, 3)) CHECK_FALSE(s.domain.has_value());
}

TEST_CASE("property: domain labels match the transform applied to each image") {
    BatchSpec spec{8, 4, true};
    const auto& ds = small_toy();
    for (int step = 0; step < 3; ++step) {
        const auto b = sample_batch(ds, spec, 0, step, 11);
        for (std::size_t i = 0; i < b.slots.size(); ++i) {
            const auto& s = b.slots[i];
            CHECK(b.domains[i] == s.domain);
            const Image expect = s.domain ? apply_domain(ds.images[s.row], *s.domain, s.seed) : ds.images[s.row];
            CHECK(b.images[i] == expect);
        }
    }
}

TEST_CASE("property: K-groups never mix places and rows belong to their place") {
    const auto& ds = small_toy();
    for (int step = 0; step < 20; ++step) {
        BatchSpec spec{4, 3, true};
        const auto slots = plan_batch(ds.manifest, spec, step / 4, step % 4, 21);
        for (std::size_t g = 0; g < slots.size(); g += 3) {
            std::set<std::size_t> rows;
            for (std::size_t k = g; k < g + 3; ++k) {
                CHECK(slots[k].place_id == slots[g].place_id);
                CHECK(ds.manifest.rows[slots[k].row].place_id == slots[k].place_id);
                CHECK(ds.manifest.rows[slots[k].row].split == Split::Train);
                rows.insert(slots[k].row);
            }
            CHECK(rows.size() == 3);
        }
    }
}

TEST_CASE("property: batch streams are reproducible and vary with seed and step") {
    const auto& m = small_toy().manifest;
    BatchSpec spec{8, 2, true};
    auto key = [](const std::vector<BatchSlot>& v) {
        std::vector<std::tuple<std::size_t, int, int, std::uint64_t>> k;
        for (const auto& s : v) k.emplace_back(s.row, s.place_id, s.domain.value_or(-1), s.seed);
        return k;
    };
    CHECK(key(plan_batch(m, spec, 2, 3, 7)) == key(plan_batch(m, spec, 2, 3, 7)));
    CHECK(key(plan_batch(m, spec, 2, 3, 7)) != key(plan_batch(m, spec, 2, 3, 8)));
    CHECK(key(plan_batch(m, spec, 2, 3, 7)) != key(plan_batch(m, spec, 2, 4, 7)));
}

TEST_CASE("excluded rows are never sampled") {
    const auto& m = small_toy().manifest;
    std::vector<std::size_t> exclude;
    for (std::size_t r = 0; r < m.rows.size(); r += 3) exclude.push_back(r);
    BatchSpec spec{8, 2, true};
    for (int step = 0; step < 10; ++step)
        for (const auto& s : plan_batch(m, spec, 0, step, 1, exclude))
            CHECK(std::find(exclude.begin(), exclude.end(), s.row) == exclude.end());
}

TEST_CASE("toy generator is deterministic by seed") {
    ToyConfig c;
    c.places = 4;
    c.per_place = 5;
    c.image_size = 20;
    c.seed = 3;
    const auto a = generate_toy_places(c), b = generate_toy_places(c);
    CHECK(manifest_to_csv(a.manifest) == manifest_to_csv(b.manifest));
    CHECK(a.images == b.images);
    c.seed = 4;
    CHECK_FALSE(generate_toy_places(c).images == a.images);
}

TEST_CASE("toy generator: 8 places by 6 images") {
    ToyConfig c;
    c.places = 8;
    c.per_place = 6;
    c.image_size = 16;
    const auto ds = generate_toy_places(c);
    CHECK(ds.images.size() == 48);
    CHECK(ds.manifest.rows.size() == 48);
    std::set<int> ids;
    for (const auto& r : ds.manifest.rows) ids.insert(r.place_id);
    CHECK(ids.size() == 8);
    CHECK(ds.manifest.rows_in(Split::Query).size() == 8);
    CHECK(ds.manifest.rows_in(Split::Db).size() == 8);
    CHECK(ds.manifest.rows_in(Split::Train).size() == 32);
    CHECK_NOTHROW(ds.manifest.validate());
    c.places = 1;
    CHECK_THROWS_AS((void)generate_toy_places(c), ConfigError);
}

TEST_CASE("toy geo tags: same place within 25 m, different places at least 100 m apart") {
    const auto& rows = small_toy().manifest.rows;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            REQUIRE(rows[i].has_geo());
            const double dist = oracle::great_circle_m(*rows[i].lat, *rows[i].lon, *rows[j].lat, *rows[j].lon);
            if (rows[i].place_id == rows[j].place_id)
                CHECK(dist <= 25.0);
            else
                CHECK(dist >= 100.0);
        }
}

TEST_CASE("manifest CSV round trip with empty optional fields") {
    DatasetManifest m;
    m.rows.push_back({"a/b.ppm", 3, 45.5, -73.25, std::nullopt, Split::Train});
    m.rows.push_back({"c.ppm", 0, std::nullopt, std::nullopt, 17, Split::Query});
    m.rows.push_back({"d.ppm", 1, 1e-7, 179.123456789, 4, Split::Db});
    const auto back = manifest_from_csv(manifest_to_csv(m));
    REQUIRE(back.rows.size() == 3);
    CHECK(manifest_to_csv(back) == manifest_to_csv(m));
    CHECK(back.rows[1].frame_id == 17);
    CHECK_FALSE(back.rows[1].has_geo());
    CHECK(*back.rows[2].lon == 179.123456789);
    CHECK(manifest_to_csv(m).rfind("image_path,place_id,lat,lon,frame_id,split\n", 0) == 0);
}

TEST_CASE("manifest validation rejects untagged eval rows and negative places") {
    DatasetManifest m;
    m.rows.push_back({"q.ppm", 0, std::nullopt, std::nullopt, std::nullopt, Split::Query});
    CHECK_THROWS_AS(m.validate(), IoError);
    m.rows[0] = {"t.ppm", -1, std::nullopt, std::nullopt, std::nullopt, Split::Train};
    CHECK_THROWS(m.validate());
    CHECK_THROWS(manifest_from_csv("image_path,place_id\nx,1\n"));
}

TEST_CASE("toy dataset saves and reloads through image files") {
    ToyConfig c;
    c.places = 3;
    c.per_place = 3;
    c.image_size = 12;
    const auto ds = generate_toy_places(c);
    const auto dir = std::filesystem::temp_directory_path() / "qdavpr_test_data_roundtrip";
    std::filesystem::remove_all(dir);
    save_dataset(ds, dir);
    const auto back = load_dataset(dir / "manifest.csv", {Split::Train, Split::Query, Split::Db}, 0);
    REQUIRE(back.images.size() == ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        REQUIRE(back.images[i].data.size() == ds.images[i].data.size());
        for (std::size_t k = 0; k < ds.images[i].data.size(); ++k)
            CHECK(std::abs(back.images[i].data[k] - ds.images[i].data[k]) <= 0.5f / 255.0f + 1e-6f);
    }
    const auto small = load_dataset(dir / "manifest.csv", {Split::Query}, 6);
    for (std::size_t r : small.manifest.rows_in(Split::Query)) CHECK(small.images[r].height == 6);
    for (std::size_t r : small.manifest.rows_in(Split::Train)) CHECK(small.images[r].empty());
    std::filesystem::remove_all(dir);
}
