#include <cstdio>
#include <fstream>

#include "qdavpr/feature_file.hpp"
#include "qdavpr/trainer.hpp"

namespace qdavpr {

Mat<float> compute_descriptors(const BoQModel<float>& model, std::span<const Image> images) {
    return model.forward(images, ForwardMode::Infer).descriptors;
}

namespace {

EvalResult score(Mat<float> db, Mat<float> queries, std::vector<ManifestRow> db_meta,
                 std::vector<ManifestRow> query_meta, const EvalOptions& opts) {
    opts.protocol.validate();
    if (db.rows() == 0 || queries.rows() == 0) throw ProtocolError("evaluation needs both db and query rows");
    if (opts.pca_dim > 0) {
        const auto pca = fit_pca<double>(Mat<double>(db.cast<double>()), opts.pca_dim, opts.pca_whiten);
        db = apply_pca(pca, Mat<double>(db.cast<double>())).cast<float>();
        queries = apply_pca(pca, Mat<double>(queries.cast<double>())).cast<float>();
    }
    EvalResult r;
    const DescriptorIndex<float> index(db, db_meta);
    r.report = recall_at_n(index, queries, std::span<const ManifestRow>(query_meta), opts.protocol);
    r.db_descriptors = std::move(db);
    r.query_descriptors = std::move(queries);
    r.db_meta = std::move(db_meta);
    r.query_meta = std::move(query_meta);
    return r;
}

template <typename T, typename F>
std::pair<std::vector<T>, std::vector<ManifestRow>> gather(const DatasetManifest& m, Split s, F&& get) {
    std::vector<T> items;
    std::vector<ManifestRow> meta;
    for (auto r : m.rows_in(s)) {
        items.push_back(get(r));
        meta.push_back(m.rows[r]);
    }
    return {std::move(items), std::move(meta)};
}

}  // namespace

EvalResult evaluate(const BoQModel<float>& model, const Dataset& ds, const EvalOptions& opts) {
    const int size = opts.resize > 0 ? opts.resize : model.config().eval_resize;
    auto fetch = [&](std::size_t r) {
        const Image& img = ds.images.at(r);
        if (img.empty()) throw IoError("image for manifest row " + std::to_string(r) + " is not loaded");
        return (img.height == size && img.width == size) ? img : resize_bilinear(img, size, size);
    };
    auto [db_imgs, db_meta] = gather<Image>(ds.manifest, Split::Db, fetch);
    auto [q_imgs, q_meta] = gather<Image>(ds.manifest, Split::Query, fetch);
    return score(compute_descriptors(model, db_imgs), compute_descriptors(model, q_imgs), std::move(db_meta),
                 std::move(q_meta), opts);
}

EvalResult evaluate(const BoQModel<float>& model, const DatasetManifest& m,
                    const std::vector<LocalFeatureSet<float>>& features, const EvalOptions& opts) {
    if (features.size() != m.rows.size()) throw ShapeError("feature file is not aligned with the manifest rows");
    auto fetch = [&](std::size_t r) { return features[r]; };
    auto [db_f, db_meta] = gather<LocalFeatureSet<float>>(m, Split::Db, fetch);
    auto [q_f, q_meta] = gather<LocalFeatureSet<float>>(m, Split::Query, fetch);
    auto db = model.forward(std::span<const LocalFeatureSet<float>>(db_f), ForwardMode::Infer).descriptors;
    auto q = model.forward(std::span<const LocalFeatureSet<float>>(q_f), ForwardMode::Infer).descriptors;
    return score(std::move(db), std::move(q), std::move(db_meta), std::move(q_meta), opts);
}

EvalResult evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest, const EvalOptions& opts) {
    const auto model = load_model(ckpt);
    if (model.config().backbone == BackboneKind::ExternalFeatures) {
        if (opts.features.empty()) throw ConfigError("external-features checkpoints need a feature file");
        return evaluate(model, read_manifest(manifest), read_feature_file(opts.features), opts);
    }
    const int size = opts.resize > 0 ? opts.resize : model.config().eval_resize;
    return evaluate(model, load_dataset(manifest, {Split::Query, Split::Db}, size), opts);
}

std::vector<std::filesystem::path> dump_attention(const BoQModel<float>& model, const Image& image,
                                                  const std::filesystem::path& out_dir) {
    const int size = model.config().eval_resize;
    const Image img = (image.height == size && image.width == size) ? image : resize_bilinear(image, size, size);
    ad::Tape<float> tape(false);
    const auto tr = model.trace(tape, img);
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    for (std::size_t l = 0; l < tr.blocks.size(); ++l) {
        const Mat<float>& a = tr.blocks[l].attention;
        const auto stem = out_dir / ("block" + std::to_string(l) + "_attention");

        auto csv_path = stem;
        csv_path += ".csv";
        std::ofstream csv(csv_path);
        if (!csv) throw IoError("cannot write " + csv_path.string());
        char buf[32];
        for (Eigen::Index q = 0; q < a.rows(); ++q) {
            for (Eigen::Index n = 0; n < a.cols(); ++n) {
                std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(a(q, n)));
                csv << (n ? "," : "") << buf;
            }
            csv << "\n";
        }

        const RowVec<float> mean = a.colwise().mean();
        Image heat(1, tr.grid.height, tr.grid.width);
        heat.data.assign(mean.data(), mean.data() + mean.size());
        const float peak = mean.maxCoeff();
        if (peak > 0)
            for (float& v : heat.data) v /= peak;
        auto pgm_path = stem;
        pgm_path += ".pgm";
        write_pnm(resize_bilinear(heat, img.height, img.width), pgm_path);
        written.push_back(pgm_path);
        written.push_back(csv_path);
    }
    return written;
}

}  // namespace qdavpr
