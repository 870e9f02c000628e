#include "qdavpr/checkpoint.hpp"

#include <fstream>

#include "qdavpr/binary_io.hpp"

namespace qdavpr {

namespace {

void put_tensors(std::ostream& out, const TensorMap& t) {
    binio::put<std::uint64_t>(out, t.size());
    for (const auto& [name, m] : t) {
        binio::put_string(out, name);
        binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
        binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
        binio::put_floats(out, {m.data(), static_cast<std::size_t>(m.size())});
    }
}

TensorMap get_tensors(std::istream& in) {
    TensorMap t;
    const auto n = binio::get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        auto name = binio::get_string(in);
        const auto rows = binio::get<std::uint32_t>(in);
        const auto cols = binio::get<std::uint32_t>(in);
        Mat<float> m(rows, cols);
        binio::get_floats(in, {m.data(), static_cast<std::size_t>(m.size())});
        t.emplace(std::move(name), std::move(m));
    }
    return t;
}

bool is_adv(const std::string& name) { return name.rfind("adv/", 0) == 0; }

void erase_adv(TensorMap& t) { std::erase_if(t, [](const auto& kv) { return is_adv(kv.first); }); }

}  // namespace

bool Checkpoint::has_adversarial() const {
    for (const auto& [name, _] : tensors)
        if (is_adv(name)) return true;
    return false;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    binio::put_magic(out, "QCKP");
    binio::put<std::uint32_t>(out, kCheckpointVersion);
    binio::put_string(out, config_to_json(ckpt.config));
    put_tensors(out, ckpt.tensors);
    put_tensors(out, ckpt.adam_m);
    put_tensors(out, ckpt.adam_v);
    binio::put<std::uint64_t>(out, ckpt.optimizer_step);
    binio::put<std::int32_t>(out, ckpt.epoch);
    binio::put<double>(out, ckpt.best_metric);
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    binio::expect_magic(in, "QCKP", path.string());
    const auto version = binio::get<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config = config_from_json(binio::get_string(in));
    c.tensors = get_tensors(in);
    c.adam_m = get_tensors(in);
    c.adam_v = get_tensors(in);
    c.optimizer_step = binio::get<std::uint64_t>(in);
    c.epoch = binio::get<std::int32_t>(in);
    c.best_metric = binio::get<double>(in);
    return c;
}

void strip_adversarial(Checkpoint& ckpt) {
    erase_adv(ckpt.tensors);
    erase_adv(ckpt.adam_m);
    erase_adv(ckpt.adam_v);
}

TensorMap snapshot(const ParameterStore<float>& store) {
    TensorMap t;
    for (const auto& [name, p] : store.all()) t.emplace(name, p.value);
    return t;
}

void restore(ParameterStore<float>& store, const TensorMap& tensors) {
    for (auto& [name, p] : store.all()) {
        const auto it = tensors.find(name);
        if (it == tensors.end()) throw IoError("checkpoint is missing tensor " + name);
        if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
            throw ShapeError("checkpoint tensor " + name + " has the wrong shape");
        p.value = it->second;
    }
}

BoQModel<float> load_model(const Checkpoint& ckpt) {
    BoQModel<float> model(ckpt.config.model, ckpt.config.train.seed);
    restore(model.params(), ckpt.tensors);
    return model;
}

}  // namespace qdavpr
