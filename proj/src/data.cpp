#include "mvhan/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mvhan/io.hpp"
#include "mvhan/rng.hpp"

namespace mvhan {

std::string side_str(Side s) { return s == Side::user ? "user" : "content"; }

Side side_from(const std::string& s) {
    if (s == "user") return Side::user;
    if (s == "content") return Side::content;
    throw ParseError("unknown side '" + s + "', expected user|content");
}

FeatureSchema::FeatureSchema(std::vector<SchemaField> fields)
    : fields_(std::move(fields)) {
    std::set<std::string> names;
    for (const auto& f : fields_) {
        if (f.name.empty()) throw ConfigError("schema: empty field name");
        if (!names.insert(f.name).second)
            throw ConfigError("schema: duplicate field name '" + f.name + "'");
        if (f.vocab < 1)
            throw ConfigError("schema: field '" + f.name + "' has vocab size 0");
        (f.side == Side::user ? user_ : content_).push_back(f);
    }
}

FeatureSchema read_schema(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<SchemaField> fields;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (strip(line).empty()) continue;
        auto cols = split(line, '\t');
        if (cols.size() != 3)
            throw ParseError(path + " line " + std::to_string(lineno) +
                             ": expected 3 tab-separated columns, got " +
                             std::to_string(cols.size()));
        std::string ctx = path + " line " + std::to_string(lineno);
        fields.push_back({cols[0], side_from(cols[1]),
                          static_cast<uint32_t>(parse_u64(cols[2], ctx))});
    }
    return FeatureSchema(std::move(fields));
}

std::string schema_text(const FeatureSchema& schema) {
    std::string out;
    for (const auto& f : schema.fields()) {
        out += f.name;
        out += '\t';
        out += side_str(f.side);
        out += '\t';
        out += std::to_string(f.vocab);
        out += '\n';
    }
    return out;
}

void write_schema(const FeatureSchema& schema, const std::string& path) {
    write_file_atomic(path, schema_text(schema));
}

uint32_t hash_feature(std::string_view raw, std::string_view field_name,
                      uint32_t vocab) {
    if (vocab < 1) throw ContractError("hash_feature: vocab size must be >= 1");
    uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    feed(field_name);
    h ^= 0x1F;
    h *= 0x100000001b3ULL;
    feed(raw);
    return static_cast<uint32_t>(h % vocab);
}

const std::vector<uint32_t>& Catalog::fields_of(uint64_t id) const {
    auto it = pos.find(id);
    if (it == pos.end())
        throw LookupError("unknown entity id " + std::to_string(id));
    return items[it->second].fields;
}

namespace {

Catalog make_catalog(const std::map<uint64_t, std::vector<uint32_t>>& entries) {
    Catalog c;
    c.items.reserve(entries.size());
    for (const auto& [id, fields] : entries) c.items.push_back({id, fields});
    for (size_t i = 0; i < c.items.size(); ++i) c.pos[c.items[i].id] = i;
    return c;
}

void check_fields(const std::vector<uint32_t>& ids,
                  const std::vector<SchemaField>& fields,
                  const std::string& what, const std::string& where) {
    if (ids.size() != fields.size())
        throw ParseError(where + ": " + what + " has " + std::to_string(ids.size()) +
                         " field ids, schema declares " +
                         std::to_string(fields.size()));
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= fields[i].vocab)
            throw ParseError(where + ": " + what + " field '" + fields[i].name +
                             "' id " + std::to_string(ids[i]) +
                             " outside vocab " + std::to_string(fields[i].vocab));
    }
}

} // namespace

std::map<std::string, std::unordered_map<uint64_t, std::set<uint64_t>>>
Dataset::positives_by_type() const {
    std::map<std::string, std::unordered_map<uint64_t, std::set<uint64_t>>> out;
    for (const auto& it : interactions) out[it.type][it.user].insert(it.content);
    return out;
}

Dataset build_dataset(FeatureSchema schema, std::vector<Interaction> interactions,
                      const std::vector<size_t>* line_numbers) {
    Dataset ds;
    ds.schema = std::move(schema);

    std::map<uint64_t, std::vector<uint32_t>> users;
    std::map<std::string, std::map<uint64_t, std::vector<uint32_t>>> catalogs;
    for (size_t i = 0; i < interactions.size(); ++i) {
        const Interaction& it = interactions[i];
        std::string where = line_numbers
                                ? "line " + std::to_string((*line_numbers)[i])
                                : "interaction " + std::to_string(i);
        check_fields(it.user_fields, ds.schema.user_fields(), "user", where);
        check_fields(it.content_fields, ds.schema.content_fields(), "content", where);
        if (it.type.empty()) throw ParseError(where + ": empty type tag");

        auto [uit, inserted] = users.emplace(it.user, it.user_fields);
        if (!inserted && uit->second != it.user_fields)
            throw ParseError(where + ": user " + std::to_string(it.user) +
                             " redefines field ids");
        auto [cit, cinserted] = catalogs[it.type].emplace(it.content, it.content_fields);
        if (!cinserted && cit->second != it.content_fields)
            throw ParseError(where + ": content " + std::to_string(it.content) +
                             " of type " + it.type + " redefines field ids");
    }
    ds.interactions = std::move(interactions);
    ds.users = make_catalog(users);
    for (const auto& [type, entries] : catalogs)
        ds.catalogs[type] = make_catalog(entries);
    return ds;
}

namespace {

std::vector<uint32_t> parse_id_list(const std::string& s, const std::string& ctx) {
    std::vector<uint32_t> out;
    for (const auto& tok : split(s, ','))
        out.push_back(static_cast<uint32_t>(parse_u64(tok, ctx)));
    return out;
}

} // namespace

Dataset parse_interactions(const std::string& path, const FeatureSchema& schema,
                           const std::vector<std::string>* allowed_types) {
    std::istringstream in(read_file(path));
    std::vector<Interaction> interactions;
    std::vector<size_t> lines;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string where = path + " line " + std::to_string(lineno);
        auto cols = split(line, '\t');
        if (cols.size() != 6)
            throw ParseError(where + ": expected 6 tab-separated columns, got " +
                             std::to_string(cols.size()));
        Interaction it;
        it.user = parse_u64(cols[0], where);
        it.content = parse_u64(cols[1], where);
        it.type = cols[2];
        it.ts = parse_i64(cols[3], where);
        it.user_fields = parse_id_list(cols[4], where);
        it.content_fields = parse_id_list(cols[5], where);
        if (allowed_types &&
            std::find(allowed_types->begin(), allowed_types->end(), it.type) ==
                allowed_types->end())
            throw ParseError(where + ": undeclared type tag '" + it.type + "'");
        interactions.push_back(std::move(it));
        lines.push_back(lineno);
    }
    return build_dataset(schema, std::move(interactions), &lines);
}

std::string interactions_text(const Dataset& ds) {
    std::string out;
    auto append_ids = [&out](const std::vector<uint32_t>& ids) {
        for (size_t i = 0; i < ids.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(ids[i]);
        }
    };
    for (const auto& it : ds.interactions) {
        out += std::to_string(it.user);
        out += '\t';
        out += std::to_string(it.content);
        out += '\t';
        out += it.type;
        out += '\t';
        out += std::to_string(it.ts);
        out += '\t';
        append_ids(it.user_fields);
        out += '\t';
        append_ids(it.content_fields);
        out += '\n';
    }
    return out;
}

void write_interactions(const Dataset& ds, const std::string& path) {
    write_file_atomic(path, interactions_text(ds));
}

std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, int64_t threshold) {
    Dataset train, test;
    train.schema = test.schema = ds.schema;
    train.catalogs = test.catalogs = ds.catalogs;
    train.users = test.users = ds.users;
    for (const auto& it : ds.interactions)
        (it.ts < threshold ? train : test).interactions.push_back(it);
    return {std::move(train), std::move(test)};
}

// ------------------------------------------------------------- synthetic

FeatureSchema synthetic_schema(const SyntheticConfig& cfg) {
    uint32_t id_vocab = cfg.id_vocab ? cfg.id_vocab : cfg.vocab;
    std::vector<SchemaField> fields;
    for (size_t f = 0; f < cfg.fields_per_side; ++f)
        fields.push_back({"uf" + std::to_string(f), Side::user,
                          f < cfg.id_fields ? id_vocab : cfg.vocab});
    for (size_t f = 0; f < cfg.fields_per_side; ++f)
        fields.push_back({"cf" + std::to_string(f), Side::content,
                          f < cfg.id_fields ? id_vocab : cfg.vocab});
    return FeatureSchema(std::move(fields));
}

namespace {

// id-coded fields memorize the entity, cluster-coded fields carry the
// transferable structure; both go through the production hash so collisions
// behave like the real pipeline.
std::vector<uint32_t> synth_fields(const SyntheticConfig& cfg,
                                   const std::vector<SchemaField>& schema_fields,
                                   uint64_t entity_id, size_t cluster) {
    std::vector<uint32_t> out(schema_fields.size());
    for (size_t f = 0; f < schema_fields.size(); ++f) {
        const auto& sf = schema_fields[f];
        std::string raw = f < cfg.id_fields
                              ? "id:" + std::to_string(entity_id)
                              : "cluster:" + std::to_string(cluster);
        out[f] = hash_feature(raw, sf.name, sf.vocab);
    }
    return out;
}

std::vector<double> jittered(const std::vector<double>& center, double noise,
                             Rng& rng) {
    std::vector<double> v(center.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = center[i] + noise * rng.normal();
    return v;
}

double latent_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg, uint64_t seed,
                           SyntheticTruth* truth) {
    if (cfg.users < 1 || cfg.clusters < 1 || cfg.latent_dim < 1 ||
        cfg.fields_per_side < 1 || cfg.vocab < 1 || cfg.days < 1)
        throw ConfigError("generate_synthetic: counts must be >= 1");
    if (cfg.noise < 0.0 || cfg.user_jitter < 0.0 || cfg.content_jitter < 0.0)
        throw ConfigError("generate_synthetic: noise levels must be >= 0");

    FeatureSchema schema = synthetic_schema(cfg);

    // Unit-norm centers keep the logit scale independent of latent_dim, so
    // sharpness and noise stay meaningful knobs across configurations.
    Rng center_rng(stream_seed(seed, "gen-centers"));
    std::vector<std::vector<double>> centers(cfg.clusters);
    for (auto& c : centers) {
        c.resize(cfg.latent_dim);
        double norm = 0.0;
        for (auto& v : c) {
            v = center_rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9) norm = 1.0;
        for (auto& v : c) v /= norm;
    }

    Rng user_rng(stream_seed(seed, "gen-users"));
    std::vector<std::vector<double>> user_latent(cfg.users + 1);
    std::vector<std::vector<uint32_t>> user_fields(cfg.users + 1);
    for (uint64_t uid = 1; uid <= cfg.users; ++uid) {
        size_t cluster = static_cast<size_t>(user_rng.below(cfg.clusters));
        user_latent[uid] = jittered(centers[cluster], cfg.user_jitter, user_rng);
        user_fields[uid] = synth_fields(cfg, schema.user_fields(), uid, cluster);
    }

    struct Item {
        uint64_t id;
        std::vector<double> latent;
        std::vector<uint32_t> fields;
    };
    std::map<std::string, std::vector<Item>> items;
    Rng content_rng(stream_seed(seed, "gen-contents"));
    uint64_t next_id = 1;
    for (const auto& [type, count] : cfg.content_counts) {
        auto& list = items[type];
        list.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            uint64_t cid = next_id++;
            size_t cluster = static_cast<size_t>(content_rng.below(cfg.clusters));
            list.push_back({cid, jittered(centers[cluster], cfg.content_jitter, content_rng),
                            synth_fields(cfg, schema.content_fields(), cid, cluster)});
        }
    }

    if (truth) {
        truth->user_latent.clear();
        truth->content_latent.clear();
        for (uint64_t uid = 1; uid <= cfg.users; ++uid)
            truth->user_latent[uid] = user_latent[uid];
        for (const auto& [type, list] : items)
            for (const auto& it : list)
                truth->content_latent[type][it.id] = it.latent;
    }

    // Per (user, type) softmax over sharpness * (dot + noise * eps); the
    // noise row is re-derivable from (seed, type, user) alone so lazy CDF
    // construction cannot perturb the stream.
    int64_t window = static_cast<int64_t>(cfg.days) * 86400;
    std::vector<Interaction> interactions;
    for (const auto& [type, count] : cfg.content_counts) {
        (void)count;
        auto cit = cfg.interaction_counts.find(type);
        if (cit == cfg.interaction_counts.end())
            throw ConfigError("generate_synthetic: no interaction count for type '" +
                              type + "'");
        size_t n_draws = cit->second;
        const auto& list = items[type];
        if (list.empty() && n_draws > 0)
            throw ConfigError("generate_synthetic: type '" + type +
                              "' has no contents");

        Rng draw_rng(stream_seed(seed, "gen-draws-" + type));
        uint64_t noise_seed = stream_seed(seed, "gen-noise-" + type);

        std::unordered_map<uint64_t, std::vector<double>> cdf_cache;
        for (size_t d = 0; d < n_draws; ++d) {
            uint64_t uid = draw_rng.below(cfg.users) + 1;
            auto cache_it = cdf_cache.find(uid);
            if (cache_it == cdf_cache.end()) {
                Rng noise_rng(splitmix64(noise_seed ^ (uid * 0x9e3779b97f4a7c15ULL)));
                std::vector<double> logits(list.size());
                double mx = -1e300;
                for (size_t j = 0; j < list.size(); ++j) {
                    double dotv = latent_dot(user_latent[uid], list[j].latent);
                    logits[j] = cfg.sharpness * (dotv + cfg.noise * noise_rng.normal());
                    mx = std::max(mx, logits[j]);
                }
                double acc = 0.0;
                for (size_t j = 0; j < list.size(); ++j) {
                    acc += std::exp(logits[j] - mx);
                    logits[j] = acc;
                }
                cache_it = cdf_cache.emplace(uid, std::move(logits)).first;
            }
            const auto& cdf = cache_it->second;
            double u = draw_rng.uniform() * cdf.back();
            size_t j = static_cast<size_t>(
                std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            if (j >= cdf.size()) j = cdf.size() - 1;

            Interaction it;
            it.user = uid;
            it.content = list[j].id;
            it.type = type;
            it.ts = static_cast<int64_t>(draw_rng.below(window));
            it.user_fields = user_fields[uid];
            it.content_fields = list[j].fields;
            interactions.push_back(std::move(it));
        }
    }

    std::stable_sort(interactions.begin(), interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                         if (a.ts != b.ts) return a.ts < b.ts;
                         if (a.type != b.type) return a.type < b.type;
                         if (a.user != b.user) return a.user < b.user;
                         return a.content < b.content;
                     });
    Dataset ds = build_dataset(std::move(schema), std::move(interactions));

    // The in-memory dataset serves the full designed corpus, cold items
    // included; a dataset re-parsed from files only knows interacted
    // entities, since the interaction file is the sole on-disk source.
    std::map<uint64_t, std::vector<uint32_t>> full_users;
    for (uint64_t uid = 1; uid <= cfg.users; ++uid)
        full_users.emplace(uid, user_fields[uid]);
    ds.users = make_catalog(full_users);
    for (const auto& [type, list] : items) {
        std::map<uint64_t, std::vector<uint32_t>> full;
        for (const auto& it : list) full.emplace(it.id, it.fields);
        ds.catalogs[type] = make_catalog(full);
    }
    return ds;
}

} // namespace mvhan
