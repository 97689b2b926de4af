#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvhan/data.hpp"
#include "mvhan/layers.hpp"
#include "mvhan/tensor.hpp"

namespace mvhan {

// Model variants: the full model, its three ablations, and the two plain
// two-tower baselines expressible as sharing configurations.
enum class Variant {
    mv_han,     // shared content embeddings + feature extraction, per-type heads
    wo_se,      // exclusive (per-type) embedding tables
    wo_fe,      // per-type feature extraction stacks
    mlp_fe,     // feature extraction replaced by a parameter-matched MLP
    ttm_single, // one content type, no sharing concerns
    ttm_all     // one fully shared tower pair over all types pooled
};

std::string variant_str(Variant v);
Variant variant_from(const std::string& s);

struct ModelConfig {
    Variant variant = Variant::mv_han;
    size_t d = 16;
    size_t heads = 2;
    size_t head_dim = 8;
    size_t blocks = 2;
    std::vector<size_t> mrl_hidden = {128};
    size_t k = 64;
    // Cosine logits are divided by this before the softmax; 1.0 gives the
    // literal raw-cosine objective.
    double temperature = 0.2;
    std::vector<std::string> types = {"source", "target"};
};

enum class ShareMode { shared, per_type };

std::string share_mode_str(ShareMode m);
ShareMode share_mode_from(const std::string& s);

// Which content-tower parameter groups are one storage across types.
struct SharingMap {
    ShareMode emb_o = ShareMode::shared;
    ShareMode fel_o = ShareMode::shared;
    ShareMode mrl_o = ShareMode::per_type;
};

SharingMap sharing_for(Variant v);

// Feature extraction layers: an attention stack, or its parameter-matched
// MLP stand-in. Maps the token matrix to the flattened per-example vector.
struct FeatureExtractor {
    std::shared_ptr<MhsaStackParams> mhsa;
    std::shared_ptr<MlpParams> mlp;
};

struct TowerPath {
    std::shared_ptr<EmbeddingTableGroup> emb;
    std::shared_ptr<FeatureExtractor> fe;
    std::shared_ptr<MlpParams> mrl;
};

struct ModelParams {
    ModelConfig config;
    FeatureSchema schema;
    uint64_t seed = 0;
    SharingMap sharing;
    TowerPath user;
    std::map<std::string, TowerPath> content; // keyed by type; aliases shared groups

    // Canonical (name, tensor) list; identity-shared groups appear once.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Hidden width for the MLP feature-extraction stand-in (a token-wise
// d -> w -> d MLP), chosen to match the replaced attention stack's
// parameter count as closely as possible.
size_t mlp_fe_hidden_width(size_t d, size_t heads, size_t head_dim,
                           size_t blocks);

ModelParams build_variant(const ModelConfig& config, const FeatureSchema& schema,
                          uint64_t seed);

// Towers. Ids are laid out [example][field]; outputs are n x k.
Tensor user_tower_batch(const ModelParams& m, std::span<const uint32_t> flat_ids,
                        size_t n);
Tensor content_tower_batch(const ModelParams& m, const std::string& type,
                           std::span<const uint32_t> flat_ids, size_t n);

// Inference-only single-example embeddings (no graph construction).
std::vector<double> user_embedding(const ModelParams& m,
                                   std::span<const uint32_t> field_ids);
std::vector<double> content_embedding(const ModelParams& m, const std::string& type,
                                      std::span<const uint32_t> field_ids);

// cosine(user_tower(u), content_tower(c, type))
double score_pair(const ModelParams& m, std::span<const uint32_t> user_ids,
                  std::span<const uint32_t> content_ids, const std::string& type);

// Text checkpoint: config + schema + sharing map + named parameter blobs.
// Canonical formatting, so save(load(p)) is byte-identical.
std::string checkpoint_text(const ModelParams& m);
void save_checkpoint(const ModelParams& m, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace mvhan
