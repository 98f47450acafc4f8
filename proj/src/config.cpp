#include "ganlink/config.hpp"

#include <set>

#include <json.hpp>

using nlohmann::json;

namespace ganlink {

namespace {

const std::set<std::string> kTrainKeys = {
    "epochs", "batch_size", "gen_updates_per_disc", "learning_rate", "beta1", "beta2", "epsilon"};

std::set<std::string> model_keys(ModelKind kind) {
    switch (kind) {
        case ModelKind::cgan:
            return {"noise_dim", "text_dim",     "gen_text_fc", "deconv_maps", "image_size",
                    "channels",  "conv_maps",    "disc_text_fc", "join_maps",  "bn_momentum"};
        case ModelKind::ae:
            return {"text_dim", "visual_dim", "branch", "hidden", "modality_dropout"};
        case ModelKind::bidnn:
            return {"text_dim", "visual_dim", "hidden"};
    }
    return {};
}

std::size_t as_size(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError("config key '" + key + "' must be a nonnegative integer");
    return v.get<std::size_t>();
}

std::vector<std::size_t> as_size_list(const json& v, const std::string& key) {
    if (!v.is_array() || v.empty())
        throw ConfigError("config key '" + key + "' must be a nonempty array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) out.push_back(as_size(e, key));
    return out;
}

double as_real(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
}

} // namespace

ParsedConfig default_config(ModelKind kind) {
    ParsedConfig cfg;
    cfg.kind = kind;
    return cfg;
}

ParsedConfig parse_config(ModelKind kind, const std::string& json_text, bool allow_train_keys) {
    json obj;
    try {
        obj = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ConfigError("config must be a JSON object");

    const std::set<std::string> allowed_model = model_keys(kind);
    ParsedConfig cfg = default_config(kind);

    for (const auto& [key, value] : obj.items()) {
        if (allowed_model.count(key)) {
            if (key == "noise_dim") cfg.gen.noise_dim = as_size(value, key);
            else if (key == "text_dim") {
                const std::size_t d = as_size(value, key);
                cfg.gen.text_dim = d;
                cfg.disc.text_dim = d;
                cfg.ae.text_dim = d;
                cfg.bidnn.text_dim = d;
            } else if (key == "gen_text_fc") cfg.gen.text_fc = as_size(value, key);
            else if (key == "deconv_maps") cfg.gen.deconv_maps = as_size_list(value, key);
            else if (key == "image_size") {
                const std::size_t s = as_size(value, key);
                cfg.gen.image_size = s;
                cfg.disc.image_size = s;
            } else if (key == "channels") cfg.gen.channels = as_size(value, key);
            else if (key == "conv_maps") cfg.disc.conv_maps = as_size_list(value, key);
            else if (key == "disc_text_fc") cfg.disc.text_fc = as_size(value, key);
            else if (key == "join_maps") cfg.disc.join_maps = as_size(value, key);
            else if (key == "bn_momentum") {
                cfg.bn_momentum = as_real(value, key);
                if (cfg.bn_momentum <= 0 || cfg.bn_momentum > 1)
                    throw ConfigError("bn_momentum must lie in (0,1]");
            } else if (key == "visual_dim") {
                const std::size_t d = as_size(value, key);
                cfg.ae.visual_dim = d;
                cfg.bidnn.visual_dim = d;
            } else if (key == "branch") cfg.ae.branch = as_size(value, key);
            else if (key == "hidden") {
                const std::size_t d = as_size(value, key);
                cfg.ae.hidden = d;
                cfg.bidnn.hidden = d;
            } else if (key == "modality_dropout") {
                cfg.ae.modality_dropout = as_real(value, key);
            }
            continue;
        }
        if (allow_train_keys && kTrainKeys.count(key)) {
            if (key == "epochs") cfg.train.epochs = as_size(value, key);
            else if (key == "batch_size") cfg.train.batch_size = as_size(value, key);
            else if (key == "gen_updates_per_disc")
                cfg.train.gen_updates_per_disc = as_size(value, key);
            else if (key == "learning_rate") cfg.train.optimizer.learning_rate = as_real(value, key);
            else if (key == "beta1") cfg.train.optimizer.beta1 = as_real(value, key);
            else if (key == "beta2") cfg.train.optimizer.beta2 = as_real(value, key);
            else if (key == "epsilon") cfg.train.optimizer.epsilon = as_real(value, key);
            continue;
        }
        throw ConfigError("unknown config key '" + key + "' for model kind " +
                          model_kind_name(kind));
    }

    switch (kind) {
        case ModelKind::cgan:
            cfg.gen.validate();
            cfg.disc.validate();
            break;
        case ModelKind::ae: cfg.ae.validate(); break;
        case ModelKind::bidnn: cfg.bidnn.validate(); break;
    }
    cfg.train.validate();
    return cfg;
}

std::string canonical_model_config(const ParsedConfig& cfg) {
    json obj; // nlohmann objects iterate in sorted key order
    switch (cfg.kind) {
        case ModelKind::cgan:
            obj["noise_dim"] = cfg.gen.noise_dim;
            obj["text_dim"] = cfg.gen.text_dim;
            obj["gen_text_fc"] = cfg.gen.text_fc;
            obj["deconv_maps"] = cfg.gen.deconv_maps;
            obj["image_size"] = cfg.gen.image_size;
            obj["channels"] = cfg.gen.channels;
            obj["conv_maps"] = cfg.disc.conv_maps;
            obj["disc_text_fc"] = cfg.disc.text_fc;
            obj["join_maps"] = cfg.disc.join_maps;
            obj["bn_momentum"] = cfg.bn_momentum;
            break;
        case ModelKind::ae:
            obj["text_dim"] = cfg.ae.text_dim;
            obj["visual_dim"] = cfg.ae.visual_dim;
            obj["branch"] = cfg.ae.branch;
            obj["hidden"] = cfg.ae.hidden;
            obj["modality_dropout"] = cfg.ae.modality_dropout;
            break;
        case ModelKind::bidnn:
            obj["text_dim"] = cfg.bidnn.text_dim;
            obj["visual_dim"] = cfg.bidnn.visual_dim;
            obj["hidden"] = cfg.bidnn.hidden;
            break;
    }
    return obj.dump();
}

} // namespace ganlink
