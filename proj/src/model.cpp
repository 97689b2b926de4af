#include "mvhan/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mvhan/io.hpp"

namespace mvhan {

std::string variant_str(Variant v) {
    switch (v) {
        case Variant::mv_han: return "mv-han";
        case Variant::wo_se: return "wo-se";
        case Variant::wo_fe: return "wo-fe";
        case Variant::mlp_fe: return "mlp";
        case Variant::ttm_single: return "ttm";
        case Variant::ttm_all: return "ttm-all";
    }
    throw ConfigError("bad variant enum");
}

Variant variant_from(const std::string& s) {
    if (s == "mv-han") return Variant::mv_han;
    if (s == "wo-se") return Variant::wo_se;
    if (s == "wo-fe") return Variant::wo_fe;
    if (s == "mlp") return Variant::mlp_fe;
    if (s == "ttm") return Variant::ttm_single;
    if (s == "ttm-all") return Variant::ttm_all;
    throw ConfigError("unknown variant '" + s +
                      "', expected mv-han|wo-se|wo-fe|mlp|ttm|ttm-all");
}

std::string share_mode_str(ShareMode m) {
    return m == ShareMode::shared ? "shared" : "per-type";
}

ShareMode share_mode_from(const std::string& s) {
    if (s == "shared") return ShareMode::shared;
    if (s == "per-type") return ShareMode::per_type;
    throw ConfigError("unknown share mode '" + s + "'");
}

SharingMap sharing_for(Variant v) {
    switch (v) {
        case Variant::mv_han:
        case Variant::mlp_fe:
            return {ShareMode::shared, ShareMode::shared, ShareMode::per_type};
        case Variant::wo_se:
            return {ShareMode::per_type, ShareMode::shared, ShareMode::per_type};
        case Variant::wo_fe:
            return {ShareMode::shared, ShareMode::per_type, ShareMode::per_type};
        case Variant::ttm_single:
        case Variant::ttm_all:
            return {ShareMode::shared, ShareMode::shared, ShareMode::shared};
    }
    throw ConfigError("bad variant enum");
}

size_t mlp_fe_hidden_width(size_t d, size_t heads, size_t head_dim,
                           size_t blocks) {
    // The stand-in is a token-wise MLP d -> w -> d shared across fields; its
    // 2dw + w + d params move in steps of 2d + 1, fine enough to land within
    // a few percent of the attention stack it replaces.
    size_t target = blocks * (3 * heads * d * head_dim + d * d);
    auto count = [d](size_t w) { return 2 * d * w + w + d; };
    size_t w = std::max<size_t>(
        1, static_cast<size_t>(std::llround(
               (static_cast<double>(target) - static_cast<double>(d)) /
               static_cast<double>(2 * d + 1))));
    size_t best = w;
    for (size_t cand : {w > 1 ? w - 1 : size_t{1}, w, w + 1}) {
        auto diff = [&](size_t x) {
            return std::llabs(static_cast<long long>(count(x)) -
                              static_cast<long long>(target));
        };
        if (diff(cand) < diff(best)) best = cand;
    }
    return best;
}

namespace {

void validate_config(const ModelConfig& c) {
    if (c.d == 0 || c.k == 0 || c.heads == 0 || c.head_dim == 0)
        throw ConfigError("model config: dimensions must be positive");
    if (c.heads * c.head_dim != c.d)
        throw ConfigError("model config: heads (" + std::to_string(c.heads) +
                          ") x head_dim (" + std::to_string(c.head_dim) +
                          ") must equal d (" + std::to_string(c.d) + ")");
    if (c.types.empty()) throw ConfigError("model config: no content types");
    std::set<std::string> uniq(c.types.begin(), c.types.end());
    if (uniq.size() != c.types.size())
        throw ConfigError("model config: duplicate content types");
    if (c.variant == Variant::ttm_single && c.types.size() != 1)
        throw ConfigError("model config: ttm takes exactly one content type, got " +
                          std::to_string(c.types.size()));
    if (c.variant != Variant::mlp_fe && c.blocks == 0)
        throw ConfigError("model config: blocks must be >= 1");
}

std::shared_ptr<FeatureExtractor> init_fe(const ModelConfig& c, Rng& rng) {
    auto fe = std::make_shared<FeatureExtractor>();
    if (c.variant == Variant::mlp_fe) {
        size_t w = mlp_fe_hidden_width(c.d, c.heads, c.head_dim, c.blocks);
        fe->mlp = std::make_shared<MlpParams>(init_mlp({c.d, w, c.d}, rng));
    } else {
        fe->mhsa = std::make_shared<MhsaStackParams>(
            init_mhsa_stack(c.d, c.heads, c.head_dim, c.blocks, rng));
    }
    return fe;
}

std::shared_ptr<MlpParams> init_mrl(const ModelConfig& c, size_t token_count,
                                    Rng& rng) {
    std::vector<size_t> widths;
    widths.push_back(token_count * c.d);
    widths.insert(widths.end(), c.mrl_hidden.begin(), c.mrl_hidden.end());
    widths.push_back(c.k);
    return std::make_shared<MlpParams>(init_mlp(widths, rng));
}

void append_fe_params(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix, const FeatureExtractor& fe) {
    if (fe.mhsa) {
        for (size_t b = 0; b < fe.mhsa->blocks.size(); ++b) {
            const auto& blk = fe.mhsa->blocks[b];
            std::string bp = prefix + ".block" + std::to_string(b);
            for (size_t h = 0; h < blk.w_q.size(); ++h) {
                std::string hp = bp + ".h" + std::to_string(h);
                out.emplace_back(hp + ".wq", blk.w_q[h]);
                out.emplace_back(hp + ".wk", blk.w_k[h]);
                out.emplace_back(hp + ".wv", blk.w_v[h]);
            }
            out.emplace_back(bp + ".wres", blk.w_res);
        }
    } else {
        for (size_t l = 0; l < fe.mlp->weights.size(); ++l) {
            out.emplace_back(prefix + ".mlp.w" + std::to_string(l), fe.mlp->weights[l]);
            out.emplace_back(prefix + ".mlp.b" + std::to_string(l), fe.mlp->biases[l]);
        }
    }
}

void append_mlp_params(std::vector<std::pair<std::string, Tensor>>& out,
                       const std::string& prefix, const MlpParams& mlp) {
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        out.emplace_back(prefix + ".w" + std::to_string(l), mlp.weights[l]);
        out.emplace_back(prefix + ".b" + std::to_string(l), mlp.biases[l]);
    }
}

void append_emb_params(std::vector<std::pair<std::string, Tensor>>& out,
                       const std::string& prefix, const EmbeddingTableGroup& g) {
    for (size_t f = 0; f < g.tables.size(); ++f)
        out.emplace_back(prefix + "." + g.field_names[f], g.tables[f]);
}

} // namespace

std::vector<std::pair<std::string, Tensor>> ModelParams::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    append_emb_params(out, "user.emb", *user.emb);
    append_fe_params(out, "user.fe", *user.fe);
    append_mlp_params(out, "user.mrl", *user.mrl);

    if (sharing.emb_o == ShareMode::shared) {
        append_emb_params(out, "content.emb.shared", *content.at(config.types[0]).emb);
    } else {
        for (const auto& t : config.types)
            append_emb_params(out, "content.emb." + t, *content.at(t).emb);
    }
    if (sharing.fel_o == ShareMode::shared) {
        append_fe_params(out, "content.fe.shared", *content.at(config.types[0]).fe);
    } else {
        for (const auto& t : config.types)
            append_fe_params(out, "content.fe." + t, *content.at(t).fe);
    }
    if (sharing.mrl_o == ShareMode::shared) {
        append_mlp_params(out, "content.mrl.shared", *content.at(config.types[0]).mrl);
    } else {
        for (const auto& t : config.types)
            append_mlp_params(out, "content.mrl." + t, *content.at(t).mrl);
    }
    return out;
}

ModelParams build_variant(const ModelConfig& config, const FeatureSchema& schema,
                          uint64_t seed) {
    validate_config(config);
    if (schema.user_fields().empty() || schema.content_fields().empty())
        throw ConfigError("build_variant: schema needs fields on both sides");

    ModelParams m;
    m.config = config;
    m.schema = schema;
    m.seed = seed;
    m.sharing = sharing_for(config.variant);

    size_t fu = schema.user_fields().size();
    size_t fc = schema.content_fields().size();
    Rng rng(stream_seed(seed, "init"));

    // Initialization order mirrors named_params() so the values are a pure
    // function of (config, schema, seed).
    m.user.emb = std::make_shared<EmbeddingTableGroup>(
        init_embedding_group(schema.user_fields(), Side::user, config.d, rng));
    m.user.fe = init_fe(config, rng);
    m.user.mrl = init_mrl(config, fu, rng);

    std::vector<std::shared_ptr<EmbeddingTableGroup>> embs;
    if (m.sharing.emb_o == ShareMode::shared) {
        auto e = std::make_shared<EmbeddingTableGroup>(init_embedding_group(
            schema.content_fields(), Side::content, config.d, rng));
        embs.assign(config.types.size(), e);
    } else {
        for (size_t i = 0; i < config.types.size(); ++i)
            embs.push_back(std::make_shared<EmbeddingTableGroup>(init_embedding_group(
                schema.content_fields(), Side::content, config.d, rng)));
    }
    std::vector<std::shared_ptr<FeatureExtractor>> fes;
    if (m.sharing.fel_o == ShareMode::shared) {
        fes.assign(config.types.size(), init_fe(config, rng));
    } else {
        for (size_t i = 0; i < config.types.size(); ++i)
            fes.push_back(init_fe(config, rng));
    }
    std::vector<std::shared_ptr<MlpParams>> mrls;
    if (m.sharing.mrl_o == ShareMode::shared) {
        mrls.assign(config.types.size(), init_mrl(config, fc, rng));
    } else {
        for (size_t i = 0; i < config.types.size(); ++i)
            mrls.push_back(init_mrl(config, fc, rng));
    }
    for (size_t i = 0; i < config.types.size(); ++i)
        m.content[config.types[i]] = TowerPath{embs[i], fes[i], mrls[i]};
    return m;
}

namespace {

Tensor fe_forward(const FeatureExtractor& fe, const Tensor& tokens, size_t F,
                  size_t n, size_t d) {
    Tensor t = fe.mhsa ? mhsa_stack(tokens, *fe.mhsa, F)
                       : mlp_forward(tokens, *fe.mlp);
    return reshape(t, {n, F * d});
}

Tensor tower_forward(const TowerPath& path, const ModelConfig& config,
                     size_t field_count, std::span<const uint32_t> flat_ids,
                     size_t n) {
    Tensor tokens = embed_concat_batch(*path.emb, flat_ids, n);
    Tensor flat = fe_forward(*path.fe, tokens, field_count, n, config.d);
    return mlp_forward(flat, *path.mrl);
}

} // namespace

Tensor user_tower_batch(const ModelParams& m, std::span<const uint32_t> flat_ids,
                        size_t n) {
    return tower_forward(m.user, m.config, m.schema.user_fields().size(),
                         flat_ids, n);
}

Tensor content_tower_batch(const ModelParams& m, const std::string& type,
                           std::span<const uint32_t> flat_ids, size_t n) {
    auto it = m.content.find(type);
    if (it == m.content.end())
        throw ConfigError("unknown content type '" + type + "'");
    return tower_forward(it->second, m.config, m.schema.content_fields().size(),
                         flat_ids, n);
}

std::vector<double> user_embedding(const ModelParams& m,
                                   std::span<const uint32_t> field_ids) {
    autograd::NoGradGuard ng;
    Tensor out = user_tower_batch(m, field_ids, 1);
    return {out.values().begin(), out.values().end()};
}

std::vector<double> content_embedding(const ModelParams& m, const std::string& type,
                                      std::span<const uint32_t> field_ids) {
    autograd::NoGradGuard ng;
    Tensor out = content_tower_batch(m, type, field_ids, 1);
    return {out.values().begin(), out.values().end()};
}

double score_pair(const ModelParams& m, std::span<const uint32_t> user_ids,
                  std::span<const uint32_t> content_ids, const std::string& type) {
    auto u = user_embedding(m, user_ids);
    auto c = content_embedding(m, type, content_ids);
    return cosine_score(u, c);
}

// -------------------------------------------------------------- checkpoint

namespace {

std::string size_list_csv(const std::vector<size_t>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string string_list_csv(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += v[i];
    }
    return out;
}

} // namespace

std::string checkpoint_text(const ModelParams& m) {
    std::ostringstream out;
    out << "mvhan-checkpoint v1\n";
    out << "[config]\n";
    out << "variant = " << variant_str(m.config.variant) << "\n";
    out << "types = " << string_list_csv(m.config.types) << "\n";
    out << "d = " << m.config.d << "\n";
    out << "heads = " << m.config.heads << "\n";
    out << "head_dim = " << m.config.head_dim << "\n";
    out << "blocks = " << m.config.blocks << "\n";
    out << "mrl_hidden = " << size_list_csv(m.config.mrl_hidden) << "\n";
    out << "k = " << m.config.k << "\n";
    out << "temperature = " << format_double_short(m.config.temperature) << "\n";
    out << "seed = " << m.seed << "\n";
    out << "[schema]\n";
    out << schema_text(m.schema);
    out << "[sharing]\n";
    out << "emb_o = " << share_mode_str(m.sharing.emb_o) << "\n";
    out << "fel_o = " << share_mode_str(m.sharing.fel_o) << "\n";
    out << "mrl_o = " << share_mode_str(m.sharing.mrl_o) << "\n";
    for (const auto& [name, tensor] : m.named_params()) {
        out << "[param " << name;
        for (size_t dim : tensor.shape()) out << " " << dim;
        out << "]\n";
        size_t row_len = tensor.rank() == 2 ? tensor.cols() : tensor.size();
        auto vals = tensor.values();
        for (size_t i = 0; i < vals.size(); ++i) {
            out << format_double_short(vals[i]);
            out << (((i + 1) % row_len == 0) ? '\n' : ' ');
        }
    }
    out << "[end]\n";
    return out.str();
}

void save_checkpoint(const ModelParams& m, const std::string& path) {
    write_file_atomic(path, checkpoint_text(m));
}

namespace {

struct LineReader {
    std::istringstream in;
    std::string path;
    size_t lineno = 0;

    explicit LineReader(std::string text, std::string p)
        : in(std::move(text)), path(std::move(p)) {}

    bool next(std::string& line) {
        if (!std::getline(in, line)) return false;
        ++lineno;
        return true;
    }

    std::string where() const { return path + " line " + std::to_string(lineno); }
};

std::pair<std::string, std::string> kv(const std::string& line,
                                       const std::string& where) {
    size_t eq = line.find('=');
    if (eq == std::string::npos)
        throw ParseError(where + ": expected 'key = value', got '" + line + "'");
    return {strip(line.substr(0, eq)), strip(line.substr(eq + 1))};
}

} // namespace

ModelParams load_checkpoint(const std::string& path) {
    LineReader r(read_file(path), path);
    std::string line;
    if (!r.next(line) || line != "mvhan-checkpoint v1")
        throw ParseError(path + ": not a mvhan checkpoint");
    if (!r.next(line) || line != "[config]")
        throw ParseError(r.where() + ": expected [config]");

    ModelConfig config;
    uint64_t seed = 0;
    while (r.next(line) && line != "[schema]") {
        auto [key, value] = kv(line, r.where());
        if (key == "variant") config.variant = variant_from(value);
        else if (key == "types") config.types = split(value, ',');
        else if (key == "d") config.d = parse_u64(value, r.where());
        else if (key == "heads") config.heads = parse_u64(value, r.where());
        else if (key == "head_dim") config.head_dim = parse_u64(value, r.where());
        else if (key == "blocks") config.blocks = parse_u64(value, r.where());
        else if (key == "mrl_hidden") {
            config.mrl_hidden.clear();
            if (!value.empty())
                for (const auto& tok : split(value, ','))
                    config.mrl_hidden.push_back(parse_u64(tok, r.where()));
        } else if (key == "k") config.k = parse_u64(value, r.where());
        else if (key == "temperature") config.temperature = parse_double(value, r.where());
        else if (key == "seed") seed = parse_u64(value, r.where());
        else throw ParseError(r.where() + ": unknown config key '" + key + "'");
    }
    if (line != "[schema]") throw ParseError(path + ": missing [schema]");

    std::vector<SchemaField> fields;
    while (r.next(line) && line != "[sharing]") {
        auto cols = split(line, '\t');
        if (cols.size() != 3)
            throw ParseError(r.where() + ": bad schema line");
        fields.push_back({cols[0], side_from(cols[1]),
                          static_cast<uint32_t>(parse_u64(cols[2], r.where()))});
    }
    if (line != "[sharing]") throw ParseError(path + ": missing [sharing]");
    FeatureSchema schema{std::move(fields)};

    SharingMap stored;
    for (int i = 0; i < 3; ++i) {
        if (!r.next(line)) throw ParseError(path + ": truncated [sharing]");
        auto [key, value] = kv(line, r.where());
        if (key == "emb_o") stored.emb_o = share_mode_from(value);
        else if (key == "fel_o") stored.fel_o = share_mode_from(value);
        else if (key == "mrl_o") stored.mrl_o = share_mode_from(value);
        else throw ParseError(r.where() + ": unknown sharing key '" + key + "'");
    }

    ModelParams m = build_variant(config, schema, seed);
    SharingMap expect = sharing_for(config.variant);
    if (stored.emb_o != expect.emb_o || stored.fel_o != expect.fel_o ||
        stored.mrl_o != expect.mrl_o)
        throw ParseError(path + ": sharing map does not match variant " +
                         variant_str(config.variant));

    auto named = m.named_params();
    size_t idx = 0;
    while (r.next(line) && line != "[end]") {
        if (line.rfind("[param ", 0) != 0 || line.back() != ']')
            throw ParseError(r.where() + ": expected [param ...] header");
        auto toks = split(line.substr(7, line.size() - 8), ' ');
        if (toks.empty()) throw ParseError(r.where() + ": empty param header");
        if (idx >= named.size())
            throw ParseError(r.where() + ": unexpected extra param '" + toks[0] + "'");
        auto& [name, tensor] = named[idx];
        if (toks[0] != name)
            throw ParseError(r.where() + ": expected param '" + name + "', got '" +
                             toks[0] + "'");
        Shape shape;
        for (size_t i = 1; i < toks.size(); ++i)
            shape.push_back(parse_u64(toks[i], r.where()));
        if (shape != tensor.shape())
            throw ParseError(r.where() + ": shape mismatch for '" + name + "'");
        auto vals = tensor.values_mut();
        size_t row_len = tensor.rank() == 2 ? tensor.cols() : tensor.size();
        size_t filled = 0;
        while (filled < vals.size()) {
            if (!r.next(line))
                throw ParseError(path + ": truncated values for '" + name + "'");
            auto nums = split(line, ' ');
            if (nums.size() != row_len)
                throw ParseError(r.where() + ": expected " + std::to_string(row_len) +
                                 " values, got " + std::to_string(nums.size()));
            for (const auto& tok : nums)
                vals[filled++] = parse_double(tok, r.where());
        }
        ++idx;
    }
    if (line != "[end]") throw ParseError(path + ": missing [end]");
    if (idx != named.size())
        throw ParseError(path + ": missing params, got " + std::to_string(idx) +
                         " of " + std::to_string(named.size()));
    return m;
}

} // namespace mvhan
