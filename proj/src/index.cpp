#include "mvhan/index.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvhan/io.hpp"
#include "mvhan/kernels.hpp"

namespace mvhan {

EmbeddingIndex build_index(const ModelParams& model, const Catalog& catalog,
                           const std::string& type) {
    if (catalog.items.empty())
        throw ContractError("build_index: empty catalog for type '" + type + "'");
    EmbeddingIndex index;
    index.type = type;
    index.dim = model.config.k;
    index.ids.reserve(catalog.size());
    index.vectors.resize(catalog.size() * index.dim);

    autograd::NoGradGuard ng;
    size_t fc = model.schema.content_fields().size();
    const size_t chunk = 512;
    for (size_t off = 0; off < catalog.size(); off += chunk) {
        size_t end = std::min(off + chunk, catalog.size());
        std::vector<uint32_t> flat;
        flat.reserve((end - off) * fc);
        for (size_t i = off; i < end; ++i)
            flat.insert(flat.end(), catalog.items[i].fields.begin(),
                        catalog.items[i].fields.end());
        Tensor out = content_tower_batch(model, type, flat, end - off);
        std::copy(out.values().begin(), out.values().end(),
                  index.vectors.begin() + off * index.dim);
    }
    for (const auto& item : catalog.items) index.ids.push_back(item.id);

    for (size_t i = 0; i < index.ids.size(); ++i) {
        double* row = index.vectors.data() + i * index.dim;
        double s = 0.0;
        for (size_t j = 0; j < index.dim; ++j) s += row[j] * row[j];
        double norm = std::sqrt(s);
        if (!(norm > 1e-12))
            throw DegenerateVectorError("build_index: content " +
                                        std::to_string(index.ids[i]) +
                                        " embeds to a near-zero vector");
        double inv = 1.0 / norm;
        for (size_t j = 0; j < index.dim; ++j) row[j] *= inv;
    }
    return index;
}

std::string index_text(const EmbeddingIndex& index) {
    std::string out;
    out += index.type;
    out += '\t';
    out += std::to_string(index.ids.size());
    out += '\t';
    out += std::to_string(index.dim);
    out += '\n';
    for (size_t i = 0; i < index.ids.size(); ++i) {
        out += std::to_string(index.ids[i]);
        out += '\t';
        auto row = index.row(i);
        for (size_t j = 0; j < index.dim; ++j) {
            if (j) out += ',';
            out += format_double(row[j]);
        }
        out += '\n';
    }
    return out;
}

void save_index(const EmbeddingIndex& index, const std::string& path) {
    write_file_atomic(path, index_text(index));
}

EmbeddingIndex load_index(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(path + ": empty index file");
    auto header = split(line, '\t');
    if (header.size() != 3)
        throw ParseError(path + " line 1: expected type, count, dimension");
    EmbeddingIndex index;
    index.type = header[0];
    size_t count = parse_u64(header[1], path + " line 1");
    index.dim = parse_u64(header[2], path + " line 1");
    index.ids.reserve(count);
    index.vectors.reserve(count * index.dim);
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string where = path + " line " + std::to_string(lineno);
        auto cols = split(line, '\t');
        if (cols.size() != 2)
            throw ParseError(where + ": expected id and vector");
        index.ids.push_back(parse_u64(cols[0], where));
        auto comps = split(cols[1], ',');
        if (comps.size() != index.dim)
            throw ParseError(where + ": expected " + std::to_string(index.dim) +
                             " components, got " + std::to_string(comps.size()));
        for (const auto& c : comps)
            index.vectors.push_back(parse_double(c, where));
    }
    if (index.ids.size() != count)
        throw ParseError(path + ": header count " + std::to_string(count) +
                         " != " + std::to_string(index.ids.size()) + " rows");
    return index;
}

void export_embeddings(const ModelParams& model, const Catalog& catalog,
                       const std::string& type, const std::string& path) {
    save_index(build_index(model, catalog, type), path);
}

std::vector<size_t> select_top_k(std::span<const double> scores,
                                 std::span<const uint64_t> ids, size_t k,
                                 const std::unordered_set<uint64_t>* exclude) {
    std::vector<size_t> order;
    order.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i)
        if (!exclude || !exclude->count(ids[i])) order.push_back(i);
    auto better = [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    };
    if (order.size() > k) {
        std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
        order.resize(k);
    } else {
        std::sort(order.begin(), order.end(), better);
    }
    return order;
}

std::vector<std::pair<uint64_t, double>> top_k(const EmbeddingIndex& index,
                                               std::span<const double> query,
                                               size_t k) {
    if (k < 1) throw ContractError("top_k: k must be >= 1");
    if (query.size() != index.dim)
        throw ShapeError("top_k: query dimension " + std::to_string(query.size()) +
                         " != index dimension " + std::to_string(index.dim));
    double s = 0.0;
    for (double v : query) s += v * v;
    double norm = std::sqrt(s);
    if (!(norm > 1e-12))
        throw DegenerateVectorError("top_k: query has near-zero norm");
    std::vector<double> q(query.begin(), query.end());
    for (auto& v : q) v /= norm;

    std::vector<double> scores(index.ids.size());
    kernels::matvec(index.vectors.data(), q.data(), scores.data(),
                    index.ids.size(), index.dim);

    std::vector<std::pair<uint64_t, double>> out;
    for (size_t i : select_top_k(scores, index.ids, k, nullptr))
        out.emplace_back(index.ids[i], scores[i]);
    return out;
}

} // namespace mvhan
