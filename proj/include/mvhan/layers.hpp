#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvhan/data.hpp"
#include "mvhan/rng.hpp"
#include "mvhan/tensor.hpp"

namespace mvhan {

// One embedding table per schema field of one side; all tables share the
// per-field dimension d and concatenate into the token sequence.
struct EmbeddingTableGroup {
    Side side = Side::user;
    size_t dim = 0;
    std::vector<std::string> field_names;
    std::vector<Tensor> tables; // vocab_f x dim, in schema field order

    size_t field_count() const { return tables.size(); }
};

// Token matrix for one example: row f is field f's embedding (F x d).
Tensor embed_concat(const EmbeddingTableGroup& group,
                    std::span<const uint32_t> field_ids);

// Batched lookup: ids laid out [example][field], output (n*F) x d with row
// i*F + f holding field f of example i.
Tensor embed_concat_batch(const EmbeddingTableGroup& group,
                          std::span<const uint32_t> flat_ids, size_t n);

// One self-attention block: per-head scaled dot-product attention over the
// field tokens, heads concatenated back to width d, then
// relu(concat + X * W_res) per token.
struct MhsaBlockParams {
    std::vector<Tensor> w_q; // per head, d x d_h
    std::vector<Tensor> w_k;
    std::vector<Tensor> w_v;
    Tensor w_res; // d x d
};

struct MhsaStackParams {
    size_t d = 0;
    size_t heads = 0;
    size_t head_dim = 0; // heads * head_dim == d
    std::vector<MhsaBlockParams> blocks;
};

// tokens: (n*F) x d grouped by example; returns the same shape. When
// attn_out is given, the per-head attention matrices ((n*F) x F, rows
// grouped by example) are appended for inspection.
Tensor mhsa_block(const Tensor& tokens, const MhsaBlockParams& params,
                  size_t tokens_per_example, size_t heads, size_t head_dim,
                  std::vector<Tensor>* attn_out = nullptr);

Tensor mhsa_stack(const Tensor& tokens, const MhsaStackParams& params,
                  size_t tokens_per_example,
                  std::vector<Tensor>* attn_out = nullptr);

struct MlpParams {
    std::vector<Tensor> weights; // in x out per layer
    std::vector<Tensor> biases;  // out per layer

    size_t layer_count() const { return weights.size(); }
    size_t in_width() const;
    size_t out_width() const;
    size_t param_count() const;
};

// Affine + ReLU hidden layers, final affine linear. x: n x in -> n x out.
Tensor mlp_forward(const Tensor& x, const MlpParams& params);

// Differentiable cosine between two rank-1 tensors.
Tensor cosine(const Tensor& a, const Tensor& b);

// Plain cosine for inference paths.
double cosine_score(std::span<const double> a, std::span<const double> b);

// --------------------------------------------------------------- init

// Embeddings ~ U(-0.05, 0.05); affine weights Glorot-uniform
// (bound sqrt(6/(fan_in+fan_out))); biases zero.
EmbeddingTableGroup init_embedding_group(const std::vector<SchemaField>& fields,
                                         Side side, size_t dim, Rng& rng);
MhsaStackParams init_mhsa_stack(size_t d, size_t heads, size_t head_dim,
                                size_t blocks, Rng& rng);
MlpParams init_mlp(const std::vector<size_t>& widths, Rng& rng);

} // namespace mvhan
