#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qdavpr/trainer.hpp"

using namespace qdavpr;

namespace {

std::vector<int> parse_ranks(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad recall rank: " + tok);
        }
    }
    return out;
}

int run_eval(const std::string& ckpt_path, const std::string& manifest, const std::string& protocol,
             const std::string& recall, int pca_dim, int resize, const std::string& features, double geo_m,
             int frames, const std::string& report_path, const std::string& desc_dir) {
    EvalOptions opts;
    opts.protocol.mode = parse_protocol(protocol);
    opts.protocol.ranks = parse_ranks(recall);
    opts.protocol.geo_threshold_m = geo_m;
    opts.protocol.frame_tolerance = frames;
    opts.pca_dim = pca_dim;
    opts.resize = resize;
    opts.features = features;
    const auto res = evaluate(load_checkpoint(ckpt_path), manifest, opts);
    std::cout << format_recall_table(res.report);
    if (!report_path.empty()) std::ofstream(report_path) << format_recall_kv(res.report);
    if (!desc_dir.empty()) {
        std::filesystem::create_directories(desc_dir);
        write_descriptor_file(std::filesystem::path(desc_dir) / "db.qdav", res.db_descriptors, res.db_meta);
        write_descriptor_file(std::filesystem::path(desc_dir) / "query.qdav", res.query_descriptors, res.query_meta);
    }
    return 0;
}

int run_augment(const std::string& manifest_path, const std::string& out, const std::string& domains,
                std::uint64_t seed) {
    const auto ids = parse_domain_list(domains);
    const auto ds = load_dataset(manifest_path, {Split::Train, Split::Query, Split::Db}, 0);
    const std::filesystem::path dir(out);
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    for (std::size_t r = 0; r < ds.manifest.rows.size(); ++r) {
        const auto& row = ds.manifest.rows[r];
        const auto stem = std::filesystem::path(row.image_path).stem().string();
        for (int id : ids) {
            const auto img = apply_domain(ds.images[r], id, derive_seed(seed, r, static_cast<std::uint64_t>(id)));
            ManifestRow aug = row;
            aug.image_path = stem + "_" + std::string(domain_name(id)) + ".ppm";
            write_pnm(img, dir / aug.image_path);
            m.rows.push_back(aug);
        }
    }
    write_manifest(m, dir / "manifest.csv");
    std::printf("wrote %zu images to %s\n", m.rows.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qdavpr: domain-adversarial Bag-of-Queries place recognition"};
    app.require_subcommand(1);

    std::string config;
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);

    std::string ckpt, manifest, protocol = "geo", recall = "1,5,10", features, report, desc_dir;
    int pca_dim = 0, resize = 0, frames = 10;
    double geo_m = 25.0;
    auto* eval = app.add_subcommand("eval", "Recall@N of a checkpoint on the query/db splits of a manifest");
    eval->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    eval->add_option("--protocol", protocol)->check(CLI::IsMember({"geo", "frame", "pairwise"}));
    eval->add_option("--recall", recall, "comma-separated ranks");
    eval->add_option("--pca-dim", pca_dim, "reduce descriptors with PCA fitted on the db set");
    eval->add_option("--resize", resize, "square eval size, default from the checkpoint");
    eval->add_option("--features", features, "QFEA file for external-features checkpoints");
    eval->add_option("--geo-threshold", geo_m, "metres");
    eval->add_option("--frame-tolerance", frames);
    eval->add_option("--report", report, "write recall@N=value lines here");
    eval->add_option("--save-descriptors", desc_dir, "write db.qdav and query.qdav here");

    std::string aug_manifest, aug_out, domains = "fog,rain,snow,wind,night,sun";
    std::uint64_t aug_seed = 0;
    auto* augment = app.add_subcommand("augment", "render synthetic-domain copies of every manifest image");
    augment->add_option("--manifest", aug_manifest)->required()->check(CLI::ExistingFile);
    augment->add_option("--out", aug_out)->required();
    augment->add_option("--domains", domains);
    augment->add_option("--seed", aug_seed);

    std::string attn_ckpt, attn_image, attn_out;
    auto* attn = app.add_subcommand("attn", "export per-block cross-attention heatmaps");
    attn->add_option("--ckpt", attn_ckpt)->required()->check(CLI::ExistingFile);
    attn->add_option("--image", attn_image)->required()->check(CLI::ExistingFile);
    attn->add_option("--out", attn_out)->required();

    ToyConfig toy;
    std::string toy_out;
    auto* toygen = app.add_subcommand("toygen", "generate a procedural toy place dataset");
    toygen->add_option("--places", toy.places);
    toygen->add_option("--per-place", toy.per_place);
    toygen->add_option("--out", toy_out)->required();
    toygen->add_option("--seed", toy.seed);
    toygen->add_option("--image-size", toy.image_size);
    toygen->add_option("--db-per-place", toy.db_per_place);
    toygen->add_option("--query-per-place", toy.query_per_place);

    CLI11_PARSE(app, argc, argv);

    try {
        check_device_env();
        if (*train) {
            const auto res = train_from_config(config);
            std::printf("best epoch %d  val R@1 %.2f\n", res.best_epoch, res.best_recall1);
        } else if (*eval) {
            return run_eval(ckpt, manifest, protocol, recall, pca_dim, resize, features, geo_m, frames, report,
                            desc_dir);
        } else if (*augment) {
            return run_augment(aug_manifest, aug_out, domains, aug_seed);
        } else if (*attn) {
            const auto model = load_model(load_checkpoint(attn_ckpt));
            for (const auto& p : dump_attention(model, read_pnm(attn_image), attn_out)) std::puts(p.c_str());
        } else if (*toygen) {
            const auto ds = generate_toy_places(toy);
            save_dataset(ds, toy_out);
            std::printf("wrote %zu images to %s\n", ds.images.size(), toy_out.c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
