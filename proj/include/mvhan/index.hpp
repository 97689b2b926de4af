#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mvhan/data.hpp"
#include "mvhan/model.hpp"

namespace mvhan {

// Exported content vectors for one type; rows L2-normalized, sorted by id.
// Exact-scan backend: the desk-scale stand-in for the production ANN stage.
struct EmbeddingIndex {
    std::string type;
    size_t dim = 0;
    std::vector<uint64_t> ids;
    std::vector<double> vectors; // ids.size() x dim

    std::span<const double> row(size_t i) const {
        return {vectors.data() + i * dim, dim};
    }
};

EmbeddingIndex build_index(const ModelParams& model, const Catalog& catalog,
                           const std::string& type);

// Header line: type, count, dimension (tab-separated). One line per item:
// id, then comma-separated components at 17 significant digits.
std::string index_text(const EmbeddingIndex& index);
void save_index(const EmbeddingIndex& index, const std::string& path);
EmbeddingIndex load_index(const std::string& path);

void export_embeddings(const ModelParams& model, const Catalog& catalog,
                       const std::string& type, const std::string& path);

// The k highest cosine scores, descending, ties broken by ascending id;
// returns the whole catalog when k exceeds it.
std::vector<std::pair<uint64_t, double>> top_k(const EmbeddingIndex& index,
                                               std::span<const double> query,
                                               size_t k);

// Shared selection helper: indices of the k best (score desc, id asc) rows,
// skipping excluded ids. Both top_k and the HR@k evaluation rank through
// this, which keeps the two paths consistent by construction.
std::vector<size_t> select_top_k(std::span<const double> scores,
                                 std::span<const uint64_t> ids, size_t k,
                                 const std::unordered_set<uint64_t>* exclude);

} // namespace mvhan
