#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "mvhan/data.hpp"
#include "mvhan/eval.hpp"
#include "mvhan/io.hpp"
#include "mvhan/rng.hpp"
#include "mvhan/train.hpp"

using namespace mvhan;
namespace fs = std::filesystem;

namespace {

// Independent O(n^2) pair-counting oracle, ties credited half.
double auc_bruteforce(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
    double wins = 0.0;
    size_t pos = 0, neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        ++pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (int l : labels)
        if (l == 0) ++neg;
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

} // namespace

TEST_CASE("auc basics") {
    std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
    std::vector<int> up = {1, 1, 0, 0};
    CHECK(auc(s, up) == 1.0);
    std::vector<int> down = {0, 0, 1, 1};
    CHECK(auc(s, down) == 0.0);

    // Ties credit one half.
    std::vector<double> t = {0.5, 0.5};
    std::vector<int> tl = {1, 0};
    CHECK(auc(t, tl) == 0.5);

    std::vector<int> ones = {1, 1, 1, 1};
    CHECK_THROWS_AS(auc(s, ones), EvalError);
    std::vector<int> zeros = {0, 0, 0, 0};
    CHECK_THROWS_AS(auc(s, zeros), EvalError);
}

TEST_CASE("auc equals the pair-counting oracle exactly, ties included") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        size_t n = 20 + rng.below(180);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool saw_pos = false, saw_neg = false;
        for (size_t i = 0; i < n; ++i) {
            // Coarse score grid forces plenty of ties.
            scores[i] = static_cast<double>(rng.below(8)) / 4.0;
            labels[i] = rng.below(2) ? 1 : 0;
            (labels[i] ? saw_pos : saw_neg) = true;
        }
        if (!saw_pos) labels[0] = 1;
        if (!saw_neg) labels[n - 1] = 0;
        CHECK(auc(scores, labels) == auc_bruteforce(scores, labels));
    }
}

TEST_CASE("rela_impr reproduces the published comparison table arithmetic") {
    auto near = [](double got, double want) {
        double rounded = std::round(got * 100.0) / 100.0;
        return std::fabs(rounded - want) <= 0.01;
    };
    // Headline comparisons against the strongest baseline per dataset.
    CHECK(near(rela_impr(0.7076, 0.6988, MetricKind::auc), 4.43));
    CHECK(near(rela_impr(0.2952, 0.2821, MetricKind::hr), 4.64));
    CHECK(near(rela_impr(0.7269, 0.7232, MetricKind::auc), 1.66));
    CHECK(near(rela_impr(0.1718, 0.1653, MetricKind::hr), 3.93));

    // Ablation rows: exclusive-embedding, per-type extraction, MLP extraction.
    CHECK(near(rela_impr(0.7076, 0.7061, MetricKind::auc), 0.73));
    CHECK(near(rela_impr(0.2952, 0.2915, MetricKind::hr), 1.27));
    CHECK(near(rela_impr(0.7269, 0.7260, MetricKind::auc), 0.40));
    CHECK(near(rela_impr(0.1718, 0.1697, MetricKind::hr), 1.24));
    CHECK(near(rela_impr(0.7076, 0.7049, MetricKind::auc), 1.32));
    CHECK(near(rela_impr(0.2952, 0.2909, MetricKind::hr), 1.48));
    CHECK(near(rela_impr(0.7269, 0.7229, MetricKind::auc), 1.79));
    CHECK(near(rela_impr(0.1718, 0.1656, MetricKind::hr), 3.74));
    CHECK(near(rela_impr(0.7076, 0.7035, MetricKind::auc), 2.01));
    CHECK(near(rela_impr(0.2952, 0.2898, MetricKind::hr), 1.86));
    CHECK(near(rela_impr(0.7269, 0.7245, MetricKind::auc), 1.07));
    CHECK(near(rela_impr(0.1718, 0.1683, MetricKind::hr), 2.08));

    CHECK(rela_impr(0.7, 0.7, MetricKind::auc) == 0.0);
    CHECK(rela_impr(0.3, 0.3, MetricKind::hr) == 0.0);

    CHECK_THROWS_AS(rela_impr(0.7, 0.5, MetricKind::auc), EvalError);
    CHECK_THROWS_AS(rela_impr(0.3, 0.0, MetricKind::hr), EvalError);
}

TEST_CASE("hr_at_k hand case and properties") {
    // Three stored unit vectors; the query ranks id 20 first, id 10 second.
    EmbeddingIndex index;
    index.type = "source";
    index.dim = 2;
    index.ids = {10, 20, 30};
    index.vectors = {1, 0, 0, 1, -1, 0};
    std::vector<double> query = {0.5, 1.0}; // cos: 10 -> .447, 20 -> .894, 30 -> -.447

    std::vector<std::pair<std::vector<double>, uint64_t>> cases = {{query, 10}};
    CHECK(hr_at_k(index, cases, {}, 1) == 0.0); // positive ranks 2nd
    CHECK(hr_at_k(index, cases, {}, 2) == 1.0);

    // k >= catalog retrieves everything.
    CHECK(hr_at_k(index, cases, {}, 3) == 1.0);
    CHECK(hr_at_k(index, cases, {}, 50) == 1.0);

    // Monotone nondecreasing in k.
    Rng rng(7);
    EmbeddingIndex big;
    big.type = "t";
    big.dim = 4;
    for (uint64_t i = 0; i < 40; ++i) {
        big.ids.push_back(i);
        std::vector<double> v(4);
        double n = 0.0;
        for (auto& x : v) {
            x = rng.uniform(-1.0, 1.0);
            n += x * x;
        }
        n = std::sqrt(n);
        for (auto& x : v) big.vectors.push_back(x / n);
    }
    std::vector<std::pair<std::vector<double>, uint64_t>> tests;
    for (int i = 0; i < 10; ++i) {
        std::vector<double> q(4);
        for (auto& x : q) x = rng.uniform(-1.0, 1.0);
        tests.push_back({q, rng.below(40)});
    }
    double prev = 0.0;
    for (size_t k = 1; k <= 40; k += 3) {
        double hr = hr_at_k(big, tests, {}, k);
        CHECK(hr >= prev);
        prev = hr;
    }
    CHECK(prev == 1.0);

    CHECK_THROWS_AS(hr_at_k(index, {}, {}, 5), EvalError); // empty test set

    // Excluding the positive itself makes it unreachable.
    std::unordered_set<uint64_t> excl = {10};
    std::vector<const std::unordered_set<uint64_t>*> exv = {&excl};
    CHECK(hr_at_k(index, cases, exv, 3) == 0.0);
}

namespace {

Dataset eval_dataset(uint64_t seed) {
    SyntheticConfig cfg;
    cfg.users = 100;
    cfg.content_counts = {{"source", 120}, {"target", 50}};
    cfg.interaction_counts = {{"source", 2000}, {"target", 200}};
    cfg.latent_dim = 4;
    cfg.clusters = 5;
    cfg.noise = 0.15;
    cfg.sharpness = 4.0;
    cfg.fields_per_side = 3;
    cfg.vocab = 64;
    return generate_synthetic(cfg, seed);
}

TrainConfig eval_train_config() {
    TrainConfig cfg;
    cfg.model.variant = Variant::mv_han;
    cfg.model.d = 4;
    cfg.model.heads = 2;
    cfg.model.head_dim = 2;
    cfg.model.blocks = 1;
    cfg.model.mrl_hidden = {32};
    cfg.model.k = 6;
    cfg.model.types = {"source", "target"};
    cfg.r = 4;
    cfg.batch = 64;
    cfg.epochs = 2;
    cfg.seed = 5;
    return cfg;
}

} // namespace

TEST_CASE("evaluate: end-to-end report, determinism, baseline attach") {
    Dataset ds = eval_dataset(51);
    SyntheticConfig cfg;
    auto [train_split, test_split] = temporal_split(ds, cfg.split_threshold());

    TrainResult r = train(eval_train_config(), train_split);
    EvalReport report = evaluate(r.model, train_split, test_split, 10, 99, 20);

    REQUIRE(report.per_type.size() == 2);
    for (const auto& m : report.per_type) {
        CHECK(m.auc >= 0.0);
        CHECK(m.auc <= 1.0);
        CHECK(m.hr >= 0.0);
        CHECK(m.hr <= 1.0);
        CHECK(m.users > 0);
        CHECK(m.test_positives > 0);
        CHECK(m.auc_pairs > m.test_positives);
    }

    EvalReport again = evaluate(r.model, train_split, test_split, 10, 99, 20);
    CHECK(report_text(again) == report_text(report));

    // Self-baseline: RelaImpr rounds to exactly 0.00%.
    EvalReport vs = evaluate(r.model, train_split, test_split, 10, 99, 20, &report,
                             "self");
    for (const auto& m : vs.per_type) {
        REQUIRE(m.relaimpr_auc.has_value());
        REQUIRE(m.relaimpr_hr.has_value());
        CHECK(std::fabs(*m.relaimpr_auc) < 1e-9);
        CHECK(std::fabs(*m.relaimpr_hr) < 1e-9);
    }
    CHECK(report_text(vs).find("relaimpr_auc = 0.00%") != std::string::npos);
}

TEST_CASE("report round-trips through its text form") {
    EvalReport report;
    report.k = 50;
    report.seed = 7;
    report.baseline = "ttm";
    TypeMetrics m;
    m.type = "source";
    m.auc = 0.7076;
    m.hr = 0.2952;
    m.test_positives = 100;
    m.users = 42;
    m.auc_pairs = 5100;
    m.relaimpr_auc = 4.43;
    m.relaimpr_hr = 4.64;
    report.per_type.push_back(m);

    fs::path dir = fs::temp_directory_path() / ("mvhan_eval_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::string path = (dir / "report.txt").string();
    write_report(report, path);
    EvalReport back = parse_report(path);
    CHECK(back.k == 50);
    CHECK(back.seed == 7);
    CHECK(back.baseline == "ttm");
    REQUIRE(back.per_type.size() == 1);
    CHECK(back.per_type[0].auc == 0.7076);
    CHECK(back.per_type[0].hr == 0.2952);
    CHECK(*back.per_type[0].relaimpr_auc == doctest::Approx(4.43));
    // Write -> read -> write is byte-stable.
    std::string path2 = (dir / "report2.txt").string();
    write_report(back, path2);
    CHECK(read_file(path) == read_file(path2));
    fs::remove_all(dir);
}
