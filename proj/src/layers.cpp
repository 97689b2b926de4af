#include "mvhan/layers.hpp"

#include <cmath>

namespace mvhan {

namespace {

void check_ids(const EmbeddingTableGroup& group,
               std::span<const uint32_t> field_ids, size_t offset) {
    for (size_t f = 0; f < group.field_count(); ++f) {
        uint32_t id = field_ids[offset + f];
        size_t vocab = group.tables[f].rows();
        if (id >= vocab)
            throw LookupError("field '" + group.field_names[f] + "': id " +
                              std::to_string(id) + " outside vocab " +
                              std::to_string(vocab));
    }
}

} // namespace

Tensor embed_concat(const EmbeddingTableGroup& group,
                    std::span<const uint32_t> field_ids) {
    return embed_concat_batch(group, field_ids, 1);
}

Tensor embed_concat_batch(const EmbeddingTableGroup& group,
                          std::span<const uint32_t> flat_ids, size_t n) {
    size_t F = group.field_count();
    if (F == 0) throw ConfigError("embed_concat: empty embedding group");
    if (flat_ids.size() != n * F)
        throw ShapeError("embed_concat: got " + std::to_string(flat_ids.size()) +
                         " ids for " + std::to_string(n) + " examples x " +
                         std::to_string(F) + " fields");
    for (size_t i = 0; i < n; ++i) check_ids(group, flat_ids, i * F);

    std::vector<Tensor> per_field;
    per_field.reserve(F);
    std::vector<uint32_t> ids(n);
    for (size_t f = 0; f < F; ++f) {
        for (size_t i = 0; i < n; ++i) ids[i] = flat_ids[i * F + f];
        per_field.push_back(embedding_gather(group.tables[f], ids));
    }
    return stack_fields(per_field);
}

Tensor mhsa_block(const Tensor& tokens, const MhsaBlockParams& params,
                  size_t tokens_per_example, size_t heads, size_t head_dim,
                  std::vector<Tensor>* attn_out) {
    size_t d = tokens.cols();
    if (heads * head_dim != d)
        throw ShapeError("mhsa_block: heads " + std::to_string(heads) + " x d_h " +
                         std::to_string(head_dim) + " != width " + std::to_string(d));
    if (params.w_q.size() != heads || params.w_k.size() != heads ||
        params.w_v.size() != heads)
        throw ShapeError("mhsa_block: parameter head count mismatch");

    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
        Tensor q = matmul(tokens, params.w_q[h]);
        Tensor k = matmul(tokens, params.w_k[h]);
        Tensor v = matmul(tokens, params.w_v[h]);
        Tensor scores = scale(grouped_matmul_nt(q, k, tokens_per_example), inv_sqrt_dh);
        Tensor attn = softmax_rows(scores);
        if (attn_out) attn_out->push_back(attn);
        head_outputs.push_back(grouped_matmul_nn(attn, v, tokens_per_example));
    }
    Tensor heads_concat =
        heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
    Tensor residual = matmul(tokens, params.w_res);
    return relu(add(heads_concat, residual));
}

Tensor mhsa_stack(const Tensor& tokens, const MhsaStackParams& params,
                  size_t tokens_per_example, std::vector<Tensor>* attn_out) {
    Tensor x = tokens;
    for (const auto& block : params.blocks)
        x = mhsa_block(x, block, tokens_per_example, params.heads,
                       params.head_dim, attn_out);
    return x;
}

size_t MlpParams::in_width() const {
    if (weights.empty()) throw ConfigError("mlp: no layers");
    return weights.front().rows();
}

size_t MlpParams::out_width() const {
    if (weights.empty()) throw ConfigError("mlp: no layers");
    return weights.back().cols();
}

size_t MlpParams::param_count() const {
    size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

Tensor mlp_forward(const Tensor& x, const MlpParams& params) {
    if (params.weights.size() != params.biases.size() || params.weights.empty())
        throw ConfigError("mlp_forward: malformed parameter list");
    if (x.cols() != params.in_width())
        throw ShapeError("mlp_forward: input width " + std::to_string(x.cols()) +
                         " != layer width " + std::to_string(params.in_width()));
    Tensor h = x;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        h = add_rowvec(matmul(h, params.weights[l]), params.biases[l]);
        if (l + 1 < params.weights.size()) h = relu(h);
    }
    return h;
}

Tensor cosine(const Tensor& a, const Tensor& b) {
    return dot(l2_normalize(a), l2_normalize(b));
}

double cosine_score(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("cosine_score: dimension mismatch " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    double na = std::sqrt(aa), nb = std::sqrt(bb);
    if (!(na > 1e-12) || !(nb > 1e-12))
        throw DegenerateVectorError("cosine_score: near-zero norm vector");
    return ab / (na * nb);
}

// ------------------------------------------------------------------ init

namespace {

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor glorot_tensor(size_t fan_in, size_t fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_tensor({fan_in, fan_out}, -bound, bound, rng);
}

} // namespace

EmbeddingTableGroup init_embedding_group(const std::vector<SchemaField>& fields,
                                         Side side, size_t dim, Rng& rng) {
    EmbeddingTableGroup g;
    g.side = side;
    g.dim = dim;
    for (const auto& f : fields) {
        g.field_names.push_back(f.name);
        g.tables.push_back(uniform_tensor({f.vocab, dim}, -0.05, 0.05, rng));
    }
    return g;
}

MhsaStackParams init_mhsa_stack(size_t d, size_t heads, size_t head_dim,
                                size_t blocks, Rng& rng) {
    if (heads * head_dim != d)
        throw ConfigError("init_mhsa_stack: heads * head_dim must equal d");
    MhsaStackParams p;
    p.d = d;
    p.heads = heads;
    p.head_dim = head_dim;
    for (size_t b = 0; b < blocks; ++b) {
        MhsaBlockParams blk;
        for (size_t h = 0; h < heads; ++h) {
            blk.w_q.push_back(glorot_tensor(d, head_dim, rng));
            blk.w_k.push_back(glorot_tensor(d, head_dim, rng));
            blk.w_v.push_back(glorot_tensor(d, head_dim, rng));
        }
        blk.w_res = glorot_tensor(d, d, rng);
        p.blocks.push_back(std::move(blk));
    }
    return p;
}

MlpParams init_mlp(const std::vector<size_t>& widths, Rng& rng) {
    if (widths.size() < 2)
        throw ConfigError("init_mlp: need at least input and output widths");
    MlpParams p;
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
        p.weights.push_back(glorot_tensor(widths[l], widths[l + 1], rng));
        p.biases.push_back(Tensor::zeros({widths[l + 1]}, true));
    }
    return p;
}

} // namespace mvhan
