#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mvhan/model.hpp"
#include "mvhan/rng.hpp"

using namespace mvhan;

namespace {

FeatureSchema tiny_schema(size_t per_side = 4, uint32_t vocab = 30) {
    std::vector<SchemaField> fields;
    for (size_t f = 0; f < per_side; ++f)
        fields.push_back({"uf" + std::to_string(f), Side::user, vocab});
    for (size_t f = 0; f < per_side; ++f)
        fields.push_back({"cf" + std::to_string(f), Side::content, vocab});
    return FeatureSchema(std::move(fields));
}

ModelConfig tiny_config(Variant v = Variant::mv_han) {
    ModelConfig c;
    c.variant = v;
    c.d = 8;
    c.heads = 2;
    c.head_dim = 4;
    c.blocks = 1;
    c.mrl_hidden = {16};
    c.k = 8;
    c.types = {"source", "target"};
    if (v == Variant::ttm_single) c.types = {"target"};
    return c;
}

std::vector<uint32_t> rand_ids(size_t n, uint32_t vocab, Rng& rng) {
    std::vector<uint32_t> ids(n);
    for (auto& id : ids) id = static_cast<uint32_t>(rng.below(vocab));
    return ids;
}

size_t total_params(const ModelParams& m) {
    size_t n = 0;
    for (const auto& [name, t] : m.named_params()) {
        (void)name;
        n += t.size();
    }
    return n;
}

} // namespace

TEST_CASE("sharing maps per variant") {
    auto sm = sharing_for(Variant::mv_han);
    CHECK(sm.emb_o == ShareMode::shared);
    CHECK(sm.fel_o == ShareMode::shared);
    CHECK(sm.mrl_o == ShareMode::per_type);

    sm = sharing_for(Variant::wo_se);
    CHECK(sm.emb_o == ShareMode::per_type);
    CHECK(sm.fel_o == ShareMode::shared);
    CHECK(sm.mrl_o == ShareMode::per_type);

    sm = sharing_for(Variant::wo_fe);
    CHECK(sm.emb_o == ShareMode::shared);
    CHECK(sm.fel_o == ShareMode::per_type);
    CHECK(sm.mrl_o == ShareMode::per_type);

    sm = sharing_for(Variant::ttm_all);
    CHECK(sm.emb_o == ShareMode::shared);
    CHECK(sm.fel_o == ShareMode::shared);
    CHECK(sm.mrl_o == ShareMode::shared);

    CHECK_THROWS_AS(variant_from("frobnicate"), ConfigError);
}

TEST_CASE("build_variant wires identity sharing") {
    FeatureSchema schema = tiny_schema();

    ModelParams mv = build_variant(tiny_config(Variant::mv_han), schema, 1);
    CHECK(mv.content.at("source").emb == mv.content.at("target").emb);
    CHECK(mv.content.at("source").fe == mv.content.at("target").fe);
    CHECK(mv.content.at("source").mrl != mv.content.at("target").mrl);

    ModelParams wose = build_variant(tiny_config(Variant::wo_se), schema, 1);
    CHECK(wose.content.at("source").emb != wose.content.at("target").emb);
    CHECK(wose.content.at("source").fe == wose.content.at("target").fe);

    ModelParams wofe = build_variant(tiny_config(Variant::wo_fe), schema, 1);
    CHECK(wofe.content.at("source").emb == wofe.content.at("target").emb);
    CHECK(wofe.content.at("source").fe != wofe.content.at("target").fe);
    CHECK(wofe.content.at("source").mrl != wofe.content.at("target").mrl);

    ModelParams all = build_variant(tiny_config(Variant::ttm_all), schema, 1);
    CHECK(all.content.at("source").emb == all.content.at("target").emb);
    CHECK(all.content.at("source").fe == all.content.at("target").fe);
    CHECK(all.content.at("source").mrl == all.content.at("target").mrl);

    // ttm wants exactly one type.
    ModelConfig bad = tiny_config(Variant::ttm_single);
    bad.types = {"source", "target"};
    CHECK_THROWS_AS(build_variant(bad, schema, 1), ConfigError);
}

TEST_CASE("variant parameter counts") {
    FeatureSchema schema = tiny_schema();
    size_t n_mv = total_params(build_variant(tiny_config(Variant::mv_han), schema, 1));
    size_t n_wose = total_params(build_variant(tiny_config(Variant::wo_se), schema, 1));
    CHECK(n_wose > n_mv); // extra embedding tables

    // The MLP stand-in matches the attention stack's parameter count within
    // 5% at the default dims (d=16, H=2, d_h=8, B=2).
    size_t target = 2 * (3 * 2 * 16 * 8 + 16 * 16);
    size_t w = mlp_fe_hidden_width(16, 2, 8, 2);
    size_t got = 2 * 16 * w + w + 16;
    CHECK(std::fabs(double(got) - double(target)) / double(target) < 0.05);

    size_t n_mlp = total_params(build_variant(tiny_config(Variant::mlp_fe), schema, 1));
    CHECK(std::fabs(double(n_mlp) - double(n_mv)) / double(n_mv) < 0.05);
}

TEST_CASE("towers: width, determinism and separation") {
    FeatureSchema schema = tiny_schema();
    Rng rng(2);

    // Output width k under the default config.
    ModelConfig defaults; // d=16, H=2, d_h=8, B=2, k=64
    ModelParams big = build_variant(defaults, tiny_schema(13, 40), 3);
    auto ids13 = rand_ids(13, 40, rng);
    CHECK(user_embedding(big, ids13).size() == 64);
    CHECK(content_embedding(big, "source", ids13).size() == 64);

    ModelParams m = build_variant(tiny_config(), schema, 7);
    auto uids = rand_ids(4, 30, rng);
    CHECK(user_embedding(m, uids) == user_embedding(m, uids));

    // Same raw content features, source vs target head: different vectors
    // after random init, while the shared FE output is identical.
    auto cids = rand_ids(4, 30, rng);
    auto zs = content_embedding(m, "source", cids);
    auto zt = content_embedding(m, "target", cids);
    CHECK(zs != zt);

    {
        autograd::NoGradGuard ng;
        Tensor tok_s = embed_concat_batch(*m.content.at("source").emb, cids, 1);
        Tensor tok_t = embed_concat_batch(*m.content.at("target").emb, cids, 1);
        Tensor fe_s = mhsa_stack(tok_s, *m.content.at("source").fe->mhsa, 4);
        Tensor fe_t = mhsa_stack(tok_t, *m.content.at("target").fe->mhsa, 4);
        CHECK(std::vector<double>(fe_s.values().begin(), fe_s.values().end()) ==
              std::vector<double>(fe_t.values().begin(), fe_t.values().end()));
    }

    CHECK_THROWS_AS(content_embedding(m, "videoz", cids), ConfigError);
}

TEST_CASE("random users rarely collide in embedding space") {
    Rng rng(11);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        ModelParams m = build_variant(tiny_config(), tiny_schema(), seed);
        auto u1 = user_embedding(m, rand_ids(4, 30, rng));
        auto u2 = user_embedding(m, rand_ids(4, 30, rng));
        CHECK(cosine_score(u1, u2) < 0.999);
    }
}

TEST_CASE("score_pair") {
    Rng rng(13);
    ModelParams m = build_variant(tiny_config(), tiny_schema(), 5);
    auto u = rand_ids(4, 30, rng);
    auto c = rand_ids(4, 30, rng);
    double s = score_pair(m, u, c, "source");
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(score_pair(m, u, c, "source") == s); // re-evaluation invariant
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    FeatureSchema schema = tiny_schema();
    ModelParams m = build_variant(tiny_config(Variant::wo_se), schema, 9);

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "mvhan_test_ckpt";
    fs::create_directories(dir);
    std::string path = (dir / "model.txt").string();

    save_checkpoint(m, path);
    ModelParams loaded = load_checkpoint(path);
    CHECK(loaded.config.variant == m.config.variant);
    CHECK(loaded.config.types == m.config.types);
    CHECK(loaded.seed == m.seed);

    auto a = m.named_params();
    auto b = loaded.named_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(std::vector<double>(a[i].second.values().begin(),
                                  a[i].second.values().end()) ==
              std::vector<double>(b[i].second.values().begin(),
                                  b[i].second.values().end()));
    }

    // save(load(x)) reproduces the bytes.
    CHECK(checkpoint_text(loaded) == checkpoint_text(m));

    // Loaded model keeps identity sharing (one storage, not copies).
    CHECK(loaded.content.at("source").fe == loaded.content.at("target").fe);
    fs::remove_all(dir);
}
