#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvhan/errors.hpp"

namespace mvhan {

enum class Side { user, content };

std::string side_str(Side s);
Side side_from(const std::string& s);

struct SchemaField {
    std::string name;
    Side side;
    uint32_t vocab;
};

// Ordered categorical field declaration for both tower inputs.
class FeatureSchema {
public:
    FeatureSchema() = default;
    explicit FeatureSchema(std::vector<SchemaField> fields);

    const std::vector<SchemaField>& fields() const { return fields_; }
    const std::vector<SchemaField>& user_fields() const { return user_; }
    const std::vector<SchemaField>& content_fields() const { return content_; }

private:
    std::vector<SchemaField> fields_;
    std::vector<SchemaField> user_;
    std::vector<SchemaField> content_;
};

FeatureSchema read_schema(const std::string& path);
std::string schema_text(const FeatureSchema& schema);
void write_schema(const FeatureSchema& schema, const std::string& path);

// Stable 64-bit FNV-1a over (field name || 0x1F || raw), reduced mod vocab.
uint32_t hash_feature(std::string_view raw, std::string_view field_name,
                      uint32_t vocab);

struct Interaction {
    uint64_t user = 0;
    uint64_t content = 0;
    std::string type;
    int64_t ts = 0; // unix seconds
    std::vector<uint32_t> user_fields;
    std::vector<uint32_t> content_fields;
};

struct CatalogEntry {
    uint64_t id;
    std::vector<uint32_t> fields;
};

// Entity table (contents of one type, or users), sorted by id.
struct Catalog {
    std::vector<CatalogEntry> items;
    std::unordered_map<uint64_t, size_t> pos;

    size_t size() const { return items.size(); }
    bool contains(uint64_t id) const { return pos.count(id) != 0; }
    const std::vector<uint32_t>& fields_of(uint64_t id) const;
};

struct Dataset {
    FeatureSchema schema;
    std::vector<Interaction> interactions;
    std::map<std::string, Catalog> catalogs; // per content type
    Catalog users;

    // Per-type positive content ids per user (the sparse rows of Y).
    std::map<std::string, std::unordered_map<uint64_t, std::set<uint64_t>>>
    positives_by_type() const;
};

// Validates interactions against the schema and derives catalogs + user
// table. Conflicting feature vectors for one entity id are an error.
Dataset build_dataset(FeatureSchema schema, std::vector<Interaction> interactions,
                      const std::vector<size_t>* line_numbers = nullptr);

// Line format (tab-separated): user, content, type, ts, user field ids
// (comma-separated), content field ids (comma-separated).
Dataset parse_interactions(const std::string& path, const FeatureSchema& schema,
                           const std::vector<std::string>* allowed_types = nullptr);
std::string interactions_text(const Dataset& ds);
void write_interactions(const Dataset& ds, const std::string& path);

// ts < threshold -> train, ts >= threshold -> test; catalogs and the user
// table are carried whole into both splits.
std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, int64_t threshold);

struct SyntheticConfig {
    size_t users = 2000;
    // (type, catalog size) in declaration order; first type is the source.
    std::vector<std::pair<std::string, size_t>> content_counts = {
        {"source", 5000}, {"target", 1000}};
    std::map<std::string, size_t> interaction_counts = {
        {"source", 100000}, {"target", 10000}};
    size_t latent_dim = 16;
    size_t clusters = 12;
    double noise = 0.15;        // per-pair logit noise
    double user_jitter = 0.5;   // user latent spread around the cluster center
    double content_jitter = 0.4; // content latent spread
    double sharpness = 4.0;     // logit multiplier on latent dot products
    size_t fields_per_side = 13;
    uint32_t vocab = 10000;
    size_t id_fields = 1;    // leading fields that encode the entity id
    uint32_t id_vocab = 0;   // id-field vocab; 0 means same as vocab
    size_t days = 10;
    size_t train_days = 9;

    int64_t split_threshold() const {
        return static_cast<int64_t>(train_days) * 86400;
    }
};

// True latent factors behind a generated dataset, for oracle scoring.
struct SyntheticTruth {
    std::unordered_map<uint64_t, std::vector<double>> user_latent;
    std::map<std::string, std::unordered_map<uint64_t, std::vector<double>>>
        content_latent;
};

FeatureSchema synthetic_schema(const SyntheticConfig& cfg);
Dataset generate_synthetic(const SyntheticConfig& cfg, uint64_t seed,
                           SyntheticTruth* truth = nullptr);

} // namespace mvhan
