#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "ganlink/config.hpp"
#include "ganlink/io.hpp"
#include "ganlink/models.hpp"

namespace ganlink {

// Checkpoint file ("CGHL"):
//   magic "CGHL" | version u32 = 1 | kind u8 | seed u64 | epochs u64 |
//   config_len u32 | canonical config JSON |
//   three sections (model params, discriminator params, batchnorm states),
//   each: count u32, then per entry name_len u32 | name | MMTE payload(s).
// Batchnorm entries carry two payloads: running mean then running variance.
struct CheckpointRaw {
    ModelKind kind = ModelKind::cgan;
    std::uint64_t seed = 0;
    std::uint64_t epochs = 0;
    std::string config;
    std::vector<std::pair<std::string, MmteTensor>> params;
    std::vector<std::pair<std::string, MmteTensor>> disc_params;
    std::vector<std::tuple<std::string, MmteTensor, MmteTensor>> bn;
};

void write_checkpoint_raw(const CheckpointRaw& raw, const std::string& path);
CheckpointRaw read_checkpoint_raw(const std::string& path);

namespace detail {

template <typename T>
std::pair<std::string, MmteTensor> to_entry(const std::string& name, const Tensor<T>& t) {
    MmteTensor m;
    m.shape = t.shape();
    m.values.reserve(t.size());
    for (T v : t.values()) m.values.push_back(static_cast<float>(v));
    return {name, std::move(m)};
}

template <typename T>
void restore_tensor(Tensor<T>& dst, const MmteTensor& src, const std::string& name) {
    if (dst.shape() != src.shape)
        throw FormatError(FormatError::Kind::corrupt,
                          "checkpoint tensor '" + name + "' has shape " + shape_str(src.shape) +
                              ", expected " + shape_str(dst.shape()));
    for (std::size_t i = 0; i < src.values.size(); ++i)
        dst.values()[i] = static_cast<T>(src.values[i]);
}

template <typename T>
ParsedConfig config_of(const ModelBundle<T>& bundle) {
    ParsedConfig cfg;
    cfg.kind = bundle.kind;
    cfg.gen = bundle.gen_cfg;
    cfg.disc = bundle.disc_cfg;
    cfg.ae = bundle.ae_cfg;
    cfg.bidnn = bundle.bidnn_cfg;
    cfg.bn_momentum = static_cast<double>(bundle.bn_momentum);
    return cfg;
}

} // namespace detail

template <typename T>
void save_checkpoint(const ModelBundle<T>& bundle, const std::string& path) {
    CheckpointRaw raw;
    raw.kind = bundle.kind;
    raw.seed = bundle.seed;
    raw.epochs = bundle.epochs_trained;
    raw.config = canonical_model_config(detail::config_of(bundle));
    for (const std::string& name : bundle.params.names())
        raw.params.push_back(detail::to_entry(name, bundle.params.at(name)));
    for (const std::string& name : bundle.disc_params.names())
        raw.disc_params.push_back(detail::to_entry(name, bundle.disc_params.at(name)));
    for (const auto& [name, state] : bundle.bn) {
        MmteTensor mean{{state.running_mean.size()}, {}};
        MmteTensor var{{state.running_var.size()}, {}};
        for (T v : state.running_mean) mean.values.push_back(static_cast<float>(v));
        for (T v : state.running_var) var.values.push_back(static_cast<float>(v));
        raw.bn.emplace_back(name, std::move(mean), std::move(var));
    }
    write_checkpoint_raw(raw, path);
}

template <typename T>
ModelBundle<T> load_checkpoint(const std::string& path) {
    CheckpointRaw raw = read_checkpoint_raw(path);
    ParsedConfig cfg = parse_config(raw.kind, raw.config, /*allow_train_keys=*/false);

    ModelBundle<T> bundle;
    switch (raw.kind) {
        case ModelKind::cgan: bundle = build_cgan<T>(cfg.gen, cfg.disc, raw.seed); break;
        case ModelKind::ae: bundle = build_ae<T>(cfg.ae, raw.seed); break;
        case ModelKind::bidnn: bundle = build_bidnn<T>(cfg.bidnn, raw.seed); break;
    }
    bundle.bn_momentum = static_cast<T>(cfg.bn_momentum);
    bundle.epochs_trained = raw.epochs;
    bundle.tag = path;

    auto restore_set = [](ParamSet<T>& set, const std::vector<std::pair<std::string, MmteTensor>>& entries) {
        if (entries.size() != set.size())
            throw FormatError(FormatError::Kind::corrupt,
                              "checkpoint parameter count mismatch: file has " +
                                  std::to_string(entries.size()) + ", model expects " +
                                  std::to_string(set.size()));
        for (const auto& [name, payload] : entries) {
            if (!set.contains(name))
                throw FormatError(FormatError::Kind::corrupt,
                                  "checkpoint has unexpected parameter '" + name + "'");
            detail::restore_tensor(set.at(name), payload, name);
        }
    };
    restore_set(bundle.params, raw.params);
    restore_set(bundle.disc_params, raw.disc_params);

    if (raw.bn.size() != bundle.bn.size())
        throw FormatError(FormatError::Kind::corrupt, "checkpoint batchnorm state count mismatch");
    for (const auto& [name, mean, var] : raw.bn) {
        auto it = bundle.bn.find(name);
        if (it == bundle.bn.end())
            throw FormatError(FormatError::Kind::corrupt,
                              "checkpoint has unexpected batchnorm state '" + name + "'");
        if (mean.values.size() != it->second.running_mean.size() ||
            var.values.size() != it->second.running_var.size())
            throw FormatError(FormatError::Kind::corrupt,
                              "checkpoint batchnorm state '" + name + "' has wrong width");
        for (std::size_t i = 0; i < mean.values.size(); ++i)
            it->second.running_mean[i] = static_cast<T>(mean.values[i]);
        for (std::size_t i = 0; i < var.values.size(); ++i)
            it->second.running_var[i] = static_cast<T>(var.values[i]);
    }
    return bundle;
}

} // namespace ganlink
