#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "mvhan/data.hpp"
#include "mvhan/index.hpp"
#include "mvhan/io.hpp"
#include "mvhan/rng.hpp"

using namespace mvhan;
namespace fs = std::filesystem;

namespace {

EmbeddingIndex random_index(size_t count, size_t dim, uint64_t seed,
                            bool with_ties = false) {
    Rng rng(seed);
    EmbeddingIndex index;
    index.type = "source";
    index.dim = dim;
    for (size_t i = 0; i < count; ++i) {
        index.ids.push_back(i * 3 + 1); // non-contiguous ids
        std::vector<double> v(dim);
        double n = 0.0;
        for (auto& x : v) {
            x = rng.uniform(-1.0, 1.0);
            n += x * x;
        }
        n = std::sqrt(n);
        for (auto& x : v) index.vectors.push_back(x / n);
    }
    if (with_ties && count >= 6) {
        // Duplicate one vector into several rows so scores tie exactly.
        for (size_t r : {size_t{2}, size_t{4}, size_t{5}})
            std::copy_n(index.vectors.begin(), dim,
                        index.vectors.begin() + r * dim);
    }
    return index;
}

// Brute-force oracle: score every row, sort by (score desc, id asc).
std::vector<std::pair<uint64_t, double>> scan_oracle(const EmbeddingIndex& index,
                                                     std::span<const double> query,
                                                     size_t k) {
    double n = 0.0;
    for (double v : query) n += v * v;
    n = std::sqrt(n);
    std::vector<double> q(query.begin(), query.end());
    for (auto& v : q) v /= n;
    std::vector<std::pair<uint64_t, double>> all;
    for (size_t i = 0; i < index.ids.size(); ++i) {
        double s = 0.0;
        auto row = index.row(i);
        for (size_t j = 0; j < index.dim; ++j) s += row[j] * q[j];
        all.emplace_back(index.ids[i], s);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

} // namespace

TEST_CASE("top_k basics") {
    EmbeddingIndex index = random_index(50, 8, 3);

    // A stored vector retrieves itself first with score 1.
    std::vector<double> q(index.row(17).begin(), index.row(17).end());
    auto hits = top_k(index, q, 5);
    REQUIRE(hits.size() == 5);
    CHECK(hits[0].first == index.ids[17]);
    CHECK(hits[0].second == doctest::Approx(1.0).epsilon(1e-12));

    // k above the catalog returns everything, still sorted.
    auto all = top_k(index, q, 500);
    CHECK(all.size() == 50);
    for (size_t i = 1; i < all.size(); ++i)
        CHECK(all[i - 1].second >= all[i].second);

    // Positive scaling leaves the ranking unchanged.
    std::vector<double> scaled = q;
    for (auto& v : scaled) v *= 7.3;
    auto hits_scaled = top_k(index, scaled, 5);
    for (size_t i = 0; i < hits.size(); ++i)
        CHECK(hits[i].first == hits_scaled[i].first);

    CHECK_THROWS_AS(top_k(index, std::vector<double>{1.0, 2.0}, 3), ShapeError);
    CHECK_THROWS_AS(top_k(index, std::vector<double>(8, 0.0), 3),
                    DegenerateVectorError);
    CHECK_THROWS_AS(top_k(index, q, 0), ContractError);
}

TEST_CASE("top_k equals the brute-force oracle, ties broken by ascending id") {
    for (uint64_t seed : {5, 6, 7}) {
        EmbeddingIndex index = random_index(200, 16, seed, /*with_ties=*/true);
        Rng rng(seed + 100);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> q(16);
            for (auto& v : q) v = rng.uniform(-1.0, 1.0);
            for (size_t k : {size_t{1}, size_t{5}, size_t{20}}) {
                auto got = top_k(index, q, k);
                auto want = scan_oracle(index, q, k);
                REQUIRE(got.size() == want.size());
                for (size_t i = 0; i < got.size(); ++i) {
                    CHECK(got[i].first == want[i].first);
                    CHECK(got[i].second == want[i].second);
                }
            }
        }
        // A query equal to the duplicated vector ties rows 0, 2, 4, 5;
        // ascending id must win.
        std::vector<double> dup(index.row(0).begin(), index.row(0).end());
        auto tied = top_k(index, dup, 4);
        CHECK(tied[0].first == index.ids[0]);
        CHECK(tied[1].first == index.ids[2]);
        CHECK(tied[2].first == index.ids[4]);
        CHECK(tied[3].first == index.ids[5]);
    }
}

TEST_CASE("select_top_k respects exclusions") {
    std::vector<double> scores = {0.9, 0.8, 0.7, 0.6};
    std::vector<uint64_t> ids = {1, 2, 3, 4};
    std::unordered_set<uint64_t> excl = {1, 3};
    auto picked = select_top_k(scores, ids, 2, &excl);
    REQUIRE(picked.size() == 2);
    CHECK(ids[picked[0]] == 2);
    CHECK(ids[picked[1]] == 4);
}

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mvhan_index_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("index file round-trips bit-exactly") {
    TempDir tmp;
    EmbeddingIndex index = random_index(30, 6, 11);
    save_index(index, tmp.file("idx.txt"));
    CHECK(!fs::exists(tmp.file("idx.txt") + ".tmp")); // atomic temp renamed away

    EmbeddingIndex back = load_index(tmp.file("idx.txt"));
    CHECK(back.type == index.type);
    CHECK(back.dim == index.dim);
    CHECK(back.ids == index.ids);
    CHECK(back.vectors == index.vectors); // 17 digits round-trip doubles exactly

    save_index(back, tmp.file("idx2.txt"));
    CHECK(read_file(tmp.file("idx.txt")) == read_file(tmp.file("idx2.txt")));
}

namespace {

Dataset small_synthetic(uint64_t seed) {
    SyntheticConfig cfg;
    cfg.users = 60;
    cfg.content_counts = {{"source", 100}, {"target", 40}};
    cfg.interaction_counts = {{"source", 900}, {"target", 120}};
    cfg.latent_dim = 4;
    cfg.clusters = 5;
    cfg.noise = 0.15;
    cfg.sharpness = 4.0;
    cfg.fields_per_side = 3;
    cfg.vocab = 64;
    return generate_synthetic(cfg, seed);
}

} // namespace

TEST_CASE("export_embeddings and cross-module ranking consistency") {
    TempDir tmp;
    Dataset ds = small_synthetic(13);

    ModelConfig mc;
    mc.d = 4;
    mc.heads = 2;
    mc.head_dim = 2;
    mc.blocks = 1;
    mc.mrl_hidden = {32};
    mc.k = 6;
    mc.types = {"source", "target"};
    ModelParams model = build_variant(mc, ds.schema, 17);

    const Catalog& catalog = ds.catalogs.at("source");
    export_embeddings(model, catalog, "source", tmp.file("source.txt"));
    EmbeddingIndex index = load_index(tmp.file("source.txt"));

    // Row count equals the catalog, every row unit-norm.
    CHECK(index.ids.size() == catalog.size());
    for (size_t i = 0; i < index.ids.size(); ++i) {
        double n = 0.0;
        for (double v : index.row(i)) n += v * v;
        CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-9);
    }

    // Ranking 100 contents by score_pair equals the exported-index ranking.
    uint64_t uid = ds.users.items[5].id;
    const auto& ufields = ds.users.fields_of(uid);
    std::vector<std::pair<uint64_t, double>> direct;
    for (const auto& item : catalog.items)
        direct.emplace_back(item.id,
                            score_pair(model, ufields, item.fields, "source"));
    std::sort(direct.begin(), direct.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    auto via_index = top_k(index, user_embedding(model, ufields), catalog.size());
    REQUIRE(via_index.size() == direct.size());
    for (size_t i = 0; i < direct.size(); ++i)
        CHECK(via_index[i].first == direct[i].first);

    CHECK_THROWS_AS(build_index(model, Catalog{}, "source"), ContractError);
}
