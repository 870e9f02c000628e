#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "helpers.hpp"
#include "qdavpr/boq.hpp"
#include "qdavpr/feature_file.hpp"
#include "qdavpr/objective.hpp"

using namespace qdavpr;
using namespace testing;

namespace {

ModelConfig toy_config() {
    ModelConfig c;
    c.blocks = 2;
    c.queries = 4;
    c.dim = 8;
    c.combinations = 3;
    c.encoder_heads = 2;
    c.encoder_ffn_dim = 16;
    c.backbone_layers = 1;
    c.train_resize = c.eval_resize = 56;
    return c;
}

Image random_image(int size, std::mt19937_64& rng) {
    Image img(3, size, size);
    std::uniform_real_distribution<float> u(0, 1);
    for (float& v : img.data) v = u(rng);
    return img;
}

ModelConfig external_config(int blocks, int queries, int dim, int combinations, int heads, int ext_dim) {
    ModelConfig c;
    c.blocks = blocks;
    c.queries = queries;
    c.dim = dim;
    c.combinations = combinations;
    c.encoder_heads = heads;
    c.backbone = BackboneKind::ExternalFeatures;
    c.external_dim = ext_dim;
    return c;
}

}  // namespace

TEST_CASE("toy backbone turns a 56x56 image into a 4x4 grid of d-dim tokens") {
    const auto cfg = toy_config();
    BoQModel<double> model(cfg, 1);
    std::mt19937_64 rng(2);
    const auto f = model.extract_local_features(random_image(56, rng));
    CHECK(f.grid == Grid{4, 4});
    CHECK(f.data.rows() == 16);
    CHECK(f.data.cols() == cfg.dim);
}

TEST_CASE("an all-zero image through a zero-bias backbone gives all-zero features") {
    BoQModel<double> model(toy_config(), 3);
    for (auto& [name, p] : model.params().all())
        if (name.rfind("model/backbone", 0) == 0 && name.size() > 5 && name.substr(name.size() - 5) == ".bias")
            p.value.setZero();
    const auto f = model.extract_local_features(Image(3, 56, 56, 0.0f));
    CHECK(f.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backbone rejects bad channel counts and non-square inputs") {
    BoQModel<double> model(toy_config(), 4);
    CHECK_THROWS_AS((void)model.extract_local_features(Image(1, 56, 56)), ShapeError);
    CHECK_THROWS_AS((void)model.extract_local_features(Image(3, 56, 42)), ShapeError);
}

TEST_CASE("external features are read from file with N and d taken from the header") {
    std::mt19937_64 rng(5);
    std::vector<LocalFeatureSet<float>> sets;
    for (int i = 0; i < 3; ++i) sets.push_back({random_matrix<float>(9, 6, rng), Grid{3, 3}});
    const auto path = std::filesystem::temp_directory_path() / "qdavpr_test_features.qfea";
    write_feature_file(path, sets);
    const auto back = read_feature_file(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == 3);
    CHECK(back[1].grid == Grid{3, 3});
    CHECK(back[1].data == sets[1].data);

    BoQModel<float> model(external_config(1, 2, 4, 2, 2, 6), 6);
    CHECK(model.backbone().layers.empty());
    CHECK(model.params().find("model/backbone.patch_embed.weight") == nullptr);
    const auto out = model.forward(std::span<const LocalFeatureSet<float>>(back), ForwardMode::Train);
    CHECK(out.attention[0].grid == Grid{3, 3});
    CHECK(out.block_features[0][0].data.rows() == 9);
}

TEST_CASE("identical keys give equal attention and the mean of the value projections") {
    ParameterStore<double> store;
    std::mt19937_64 rng(7);
    MultiHeadAttention<double> mha(store, "attn", 4, 2, rng);
    mha.k_proj.weight->value.setZero();
    mha.out_proj.weight->value.setIdentity();
    mha.out_proj.bias->value.setZero();
    ad::Tape<double> t(false);
    const Matd q = random_matrix(1, 4, rng), x = random_matrix(2, 4, rng);
    const auto r = mha(t.constant(q), t.constant(x));
    const Matd v = (x * mha.v_proj.weight->value.transpose()).rowwise() + RowVec<double>(mha.v_proj.bias->value);
    CHECK(r.weights(0, 0) == doctest::Approx(0.5));
    CHECK(r.weights(0, 1) == doctest::Approx(0.5));
    CHECK((r.output.value() - v.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("multi-head attention matches a per-head hand computation") {
    ParameterStore<double> store;
    std::mt19937_64 rng(8);
    const int dim = 6, heads = 3, hd = 2;
    MultiHeadAttention<double> mha(store, "attn", dim, heads, rng);
    for (auto& [_, p] : store.all()) p.value = random_matrix(p.value.rows(), p.value.cols(), rng);
    const Matd q = random_matrix(3, dim, rng), x = random_matrix(5, dim, rng);
    auto proj = [](const Matd& in, const Linear<double>& l) {
        return oracle::Matrix(to_rows((in * l.weight->value.transpose()).rowwise() + RowVec<double>(l.bias->value)));
    };
    const auto Q = proj(q, mha.q_proj), K = proj(x, mha.k_proj), V = proj(x, mha.v_proj);
    Matd merged = Matd::Zero(3, dim), avg = Matd::Zero(3, 5);
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < 3; ++i) {
            std::vector<double> s(5);
            for (int j = 0; j < 5; ++j) {
                double acc = 0;
                for (int c = 0; c < hd; ++c) acc += Q[i][h * hd + c] * K[j][h * hd + c];
                s[j] = acc / std::sqrt(double(hd));
            }
            const double m = *std::max_element(s.begin(), s.end());
            double z = 0;
            for (double& v : s) z += (v = std::exp(v - m));
            for (int j = 0; j < 5; ++j) {
                avg(i, j) += s[j] / z / heads;
                for (int c = 0; c < hd; ++c) merged(i, h * hd + c) += s[j] / z * V[j][h * hd + c];
            }
        }
    const Matd expect = (merged * mha.out_proj.weight->value.transpose()).rowwise() +
                        RowVec<double>(mha.out_proj.bias->value);
    ad::Tape<double> t(false);
    const auto r = mha(t.constant(q), t.constant(x));
    CHECK((r.output.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.weights - avg).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross-attention rows are probability distributions") {
    BoQModel<double> model(toy_config(), 9);
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 3; ++trial) {
        const Image img = random_image(56, rng);
        const auto out = model.forward(std::span<const Image>(&img, 1), ForwardMode::Train);
        for (const auto& a : out.attention[0].blocks) {
            CHECK(a.rows() == 4);
            CHECK(a.cols() == 16);
            CHECK((a.array() >= 0).all());
            CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-5);
        }
    }
}

TEST_CASE("blocks chain: the second block consumes the first block's refined tokens") {
    BoQModel<double> model(toy_config(), 11);
    std::mt19937_64 rng(12);
    ad::Tape<double> t(false);
    const auto tr = model.trace(t, random_image(56, rng));
    const auto b0 = model.blocks()[0](tr.local);
    const auto b1 = model.blocks()[1](b0.features);
    CHECK(b0.features.value() == tr.blocks[0].features.value());
    CHECK(b1.features.value() == tr.blocks[1].features.value());
    CHECK(b1.queries.value() == tr.blocks[1].queries.value());
    // Re-running block 1 on the unrefined tokens gives something different.
    CHECK_FALSE(model.blocks()[1](tr.local).queries.value() == tr.blocks[1].queries.value());
}

TEST_CASE("BoQ block rejects tokens whose width differs from the queries") {
    BoQModel<double> model(toy_config(), 13);
    ad::Tape<double> t(false);
    CHECK_THROWS_AS(model.blocks()[0](t.constant(Matd::Zero(4, 5))), ShapeError);
}

TEST_CASE("identity mixing returns the normalised query features") {
    std::mt19937_64 rng(14);
    const Matd o = random_matrix(2, 5, rng);
    const auto r = combine_and_normalize<double>(o, Matd::Identity(2, 2));
    CHECK((r.combinations - unit_rows(o)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("combination matches matrix-multiply-then-normalise") {
    std::mt19937_64 rng(15);
    const Matd o = random_matrix(6, 4, rng), w = random_matrix(3, 6, rng);
    const auto r = combine_and_normalize<double>(o, w);
    oracle::Matrix c(3, oracle::Vec(4, 0.0));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j)
            for (int k = 0; k < 4; ++k) c[i][k] += w(i, j) * o(j, k);
    double total = 0;
    for (const auto& row : c) total += oracle::dot(row, row);
    for (int i = 0; i < 3; ++i) {
        const double n = std::sqrt(oracle::dot(c[i], c[i]));
        for (int k = 0; k < 4; ++k) {
            CHECK(std::abs(r.combinations(i, k) - c[i][k] / n) < 1e-6);
            CHECK(std::abs(r.descriptor(i * 4 + k) - c[i][k] / std::sqrt(total)) < 1e-6);
        }
    }
    CHECK_THROWS_AS((void)combine_and_normalize<double>(o, random_matrix(7, 6, rng)), ConfigError);
}

TEST_CASE("model config invariants") {
    ModelConfig c;
    CHECK(c.descriptor_dim() == 12288);
    CHECK(c.total_queries() == 128);
    c.combinations = 129;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.encoder_heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.blocks = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("full-size head: 12288-dim unit descriptor and 128 query features") {
    auto cfg = external_config(2, 64, 384, 32, 8, 16);
    BoQModel<float> model(cfg, 16);
    std::mt19937_64 rng(17);
    const std::vector<LocalFeatureSet<float>> in = {{random_matrix<float>(4, 16, rng), Grid{2, 2}}};
    const auto out = model.forward(std::span<const LocalFeatureSet<float>>(in), ForwardMode::Train);
    CHECK(out.descriptors.cols() == 12288);
    CHECK(std::abs(out.descriptors.row(0).norm() - 1.0f) < 1e-5);
    std::size_t total = 0;
    for (const auto& q : out.block_queries[0]) total += static_cast<std::size_t>(q.rows());
    CHECK(total == 128);
}

TEST_CASE("inference descriptors equal train-mode descriptors bit for bit and are unit norm") {
    BoQModel<float> model(toy_config(), 18);
    std::mt19937_64 rng(19);
    std::vector<Image> imgs = {random_image(56, rng), random_image(56, rng)};
    const auto train = model.forward(std::span<const Image>(imgs), ForwardMode::Train);
    const auto infer = model.forward(std::span<const Image>(imgs), ForwardMode::Infer);
    CHECK(train.descriptors == infer.descriptors);
    CHECK(infer.combinations.empty());
    for (Eigen::Index r = 0; r < 2; ++r) {
        CHECK(std::abs(infer.descriptors.row(r).norm() - 1.0f) < 1e-5);
        CHECK((train.combinations[r].rowwise().norm().array() - 1.0f).abs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("property: permuting the batch permutes the outputs; queries are read-only") {
    BoQModel<double> model(toy_config(), 20);
    std::mt19937_64 rng(21);
    std::vector<Image> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(random_image(56, rng));
    const Matd before = model.blocks()[0].queries->value;
    const auto a = model.forward(std::span<const Image>(imgs), ForwardMode::Infer).descriptors;
    const std::vector<int> perm = {2, 0, 3, 1};
    std::vector<Image> shuffled;
    for (int p : perm) shuffled.push_back(imgs[p]);
    const auto b = model.forward(std::span<const Image>(shuffled), ForwardMode::Infer).descriptors;
    for (int i = 0; i < 4; ++i) CHECK(b.row(i) == a.row(perm[i]));
    CHECK(model.blocks()[0].queries->value == before);
}

TEST_CASE("property: d(total loss)/d(W_mix) matches finite differences on a d=4 model") {
    ModelConfig cfg;
    cfg.blocks = 2;
    cfg.queries = 3;
    cfg.dim = 4;
    cfg.combinations = 3;
    cfg.encoder_heads = 2;
    cfg.encoder_ffn_dim = 8;
    cfg.patch_size = 4;
    cfg.backbone_layers = 1;
    BoQModel<double> model(cfg, 22);
    AdversarialConfig acfg;
    acfg.hidden = 8;
    AdversarialHeads<double> heads(cfg.dim, cfg.blocks, acfg, 23);
    std::mt19937_64 rng(24);
    std::vector<Image> imgs;
    for (int i = 0; i < 6; ++i) imgs.push_back(random_image(8, rng));
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    const std::vector<DomainLabel> domains = {std::nullopt, 4, 1, std::nullopt, 0, 5};
    LossWeights w;
    w.miner_epsilon = 1.0;  // keep every pair so the mined set is stable under perturbation
    LocalLossConfig lc;
    lc.pool_size = 2;
    lc.top_k = 2;
    ObjectiveBatch<double> batch;
    batch.images = imgs;
    batch.labels = labels;
    batch.domains = domains;

    Parameter<double>& mix = model.mix();
    auto total_at = [&](const oracle::Vec& x) {
        const Matd keep = mix.value;
        mix.value = Eigen::Map<const Matd>(x.data(), keep.rows(), keep.cols());
        ad::Tape<double> t(false);
        const double v = build_objective(t, model, heads, batch, w, lc, acfg.grl).total.value()(0, 0);
        mix.value = keep;
        return v;
    };
    model.params().zero_grad();
    ad::Tape<double> t;
    const auto terms = build_objective(t, model, heads, batch, w, lc, acfg.grl);
    REQUIRE(terms.local.value()(0, 0) > 0);
    REQUIRE(terms.adv_query.value()(0, 0) > 0);
    t.backward(terms.total);
    const auto numeric = oracle::numeric_gradient(total_at, to_vec(mix.value), 1e-6);
    CHECK(max_rel_error(numeric, to_vec(mix.grad), 1e-6) < 1e-3);
}
