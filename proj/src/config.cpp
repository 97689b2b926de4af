#include "mvhan/config.hpp"

#include <sstream>

#include "mvhan/io.hpp"

namespace mvhan {

namespace {

std::vector<size_t> parse_size_list(const std::string& v, const std::string& ctx) {
    std::vector<size_t> out;
    if (strip(v).empty()) return out;
    for (const auto& tok : split(v, ','))
        out.push_back(parse_u64(strip(tok), ctx));
    return out;
}

std::vector<std::string> parse_string_list(const std::string& v) {
    std::vector<std::string> out;
    for (const auto& tok : split(v, ','))
        out.push_back(strip(tok));
    return out;
}

} // namespace

void RunConfig::apply_override(const std::string& key, const std::string& value) {
    const std::string ctx = "config key " + key;
    if (key == "seed") {
        seed = parse_u64(value, ctx);
        train.seed = seed;
    } else if (key == "data.users") data.users = parse_u64(value, ctx);
    else if (key == "data.source_contents") data.content_counts[0].second = parse_u64(value, ctx);
    else if (key == "data.target_contents") data.content_counts[1].second = parse_u64(value, ctx);
    else if (key == "data.source_interactions") data.interaction_counts["source"] = parse_u64(value, ctx);
    else if (key == "data.target_interactions") data.interaction_counts["target"] = parse_u64(value, ctx);
    else if (key == "data.latent_dim") data.latent_dim = parse_u64(value, ctx);
    else if (key == "data.clusters") data.clusters = parse_u64(value, ctx);
    else if (key == "data.noise") data.noise = parse_double(value, ctx);
    else if (key == "data.user_jitter") data.user_jitter = parse_double(value, ctx);
    else if (key == "data.content_jitter") data.content_jitter = parse_double(value, ctx);
    else if (key == "data.sharpness") data.sharpness = parse_double(value, ctx);
    else if (key == "data.fields") data.fields_per_side = parse_u64(value, ctx);
    else if (key == "data.vocab") data.vocab = static_cast<uint32_t>(parse_u64(value, ctx));
    else if (key == "data.id_vocab") data.id_vocab = static_cast<uint32_t>(parse_u64(value, ctx));
    else if (key == "data.id_fields") data.id_fields = parse_u64(value, ctx);
    else if (key == "data.days") data.days = parse_u64(value, ctx);
    else if (key == "data.train_days") data.train_days = parse_u64(value, ctx);
    else if (key == "model.variant") model.variant = variant_from(value);
    else if (key == "model.d") model.d = parse_u64(value, ctx);
    else if (key == "model.heads") model.heads = parse_u64(value, ctx);
    else if (key == "model.head_dim") model.head_dim = parse_u64(value, ctx);
    else if (key == "model.blocks") model.blocks = parse_u64(value, ctx);
    else if (key == "model.mrl_hidden") model.mrl_hidden = parse_size_list(value, ctx);
    else if (key == "model.k") model.k = parse_u64(value, ctx);
    else if (key == "model.temperature") model.temperature = parse_double(value, ctx);
    else if (key == "model.types") model.types = parse_string_list(value);
    else if (key == "train.r") train.r = parse_u64(value, ctx);
    else if (key == "train.batch") train.batch = parse_u64(value, ctx);
    else if (key == "train.epochs") train.epochs = parse_u64(value, ctx);
    else if (key == "train.optimizer") train.optimizer = opt_kind_from(value);
    else if (key == "train.lr") train.lr = parse_double(value, ctx);
    else if (key == "train.momentum") train.momentum = parse_double(value, ctx);
    else if (key == "train.beta1") train.beta1 = parse_double(value, ctx);
    else if (key == "train.beta2") train.beta2 = parse_double(value, ctx);
    else if (key == "eval.k") eval_k = parse_u64(value, ctx);
    else if (key == "eval.negatives") eval_negatives = parse_u64(value, ctx);
    else throw ConfigError("unknown config key '" + key + "'");
    train.model = model;
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = strip(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + " line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + s + "'");
        try {
            cfg.apply_override(strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + " line " + std::to_string(lineno) + ": " +
                              e.what());
        } catch (const ParseError& e) {
            throw ConfigError(origin + " line " + std::to_string(lineno) + ": " +
                              e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_text(read_file(path), path);
}

} // namespace mvhan
