#include "mvhan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mvhan/io.hpp"
#include "mvhan/kernels.hpp"
#include "mvhan/rng.hpp"

namespace mvhan {

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw ShapeError("auc: scores and labels length mismatch");
    size_t pos = 0, neg = 0;
    for (int l : labels) (l != 0 ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw EvalError("auc undefined: input has a single class");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Tie groups share the average rank, which realizes the ties-count-half
    // convention exactly.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t t = i; t <= j; ++t)
            if (labels[order[t]] != 0) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double rela_impr(double value, double baseline, MetricKind kind) {
    if (kind == MetricKind::auc) {
        if (baseline == 0.5)
            throw EvalError("rela_impr: degenerate AUC baseline 0.5");
        return ((value - 0.5) / (baseline - 0.5) - 1.0) * 100.0;
    }
    if (!(baseline > 0.0))
        throw EvalError("rela_impr: degenerate HR baseline " +
                        std::to_string(baseline));
    return (value / baseline - 1.0) * 100.0;
}

const TypeMetrics* EvalReport::find(const std::string& type) const {
    for (const auto& m : per_type)
        if (m.type == type) return &m;
    return nullptr;
}

namespace {

std::string pct(double v) {
    double rounded = std::round(v * 100.0) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", rounded);
    return buf;
}

} // namespace

std::string report_text(const EvalReport& report) {
    std::ostringstream out;
    out << "mvhan-eval-report v1\n";
    out << "k = " << report.k << "\n";
    out << "seed = " << report.seed << "\n";
    if (!report.baseline.empty()) out << "baseline = " << report.baseline << "\n";
    for (const auto& m : report.per_type) {
        out << "[type " << m.type << "]\n";
        out << "auc = " << format_double_short(m.auc) << "\n";
        out << "hr = " << format_double_short(m.hr) << "\n";
        out << "test_positives = " << m.test_positives << "\n";
        out << "users = " << m.users << "\n";
        out << "auc_pairs = " << m.auc_pairs << "\n";
        if (m.relaimpr_auc) out << "relaimpr_auc = " << pct(*m.relaimpr_auc) << "\n";
        if (m.relaimpr_hr) out << "relaimpr_hr = " << pct(*m.relaimpr_hr) << "\n";
    }
    out << "[end]\n";
    return out.str();
}

void write_report(const EvalReport& report, const std::string& path) {
    write_file_atomic(path, report_text(report));
}

EvalReport parse_report(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    size_t lineno = 0;
    auto where = [&] { return path + " line " + std::to_string(lineno); };
    if (!std::getline(in, line) || line != "mvhan-eval-report v1")
        throw ParseError(path + ": not a mvhan eval report");
    ++lineno;

    EvalReport report;
    TypeMetrics* current = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        if (line == "[end]") return report;
        if (line.rfind("[type ", 0) == 0 && line.back() == ']') {
            report.per_type.push_back({});
            current = &report.per_type.back();
            current->type = line.substr(6, line.size() - 7);
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(where() + ": expected 'key = value'");
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        auto parse_pct = [&](const std::string& v) {
            if (v.empty() || v.back() != '%')
                throw ParseError(where() + ": expected percent value");
            return parse_double(v.substr(0, v.size() - 1), where());
        };
        if (!current) {
            if (key == "k") report.k = parse_u64(value, where());
            else if (key == "seed") report.seed = parse_u64(value, where());
            else if (key == "baseline") report.baseline = value;
            else throw ParseError(where() + ": unknown report key '" + key + "'");
        } else {
            if (key == "auc") current->auc = parse_double(value, where());
            else if (key == "hr") current->hr = parse_double(value, where());
            else if (key == "test_positives") current->test_positives = parse_u64(value, where());
            else if (key == "users") current->users = parse_u64(value, where());
            else if (key == "auc_pairs") current->auc_pairs = parse_u64(value, where());
            else if (key == "relaimpr_auc") current->relaimpr_auc = parse_pct(value);
            else if (key == "relaimpr_hr") current->relaimpr_hr = parse_pct(value);
            else throw ParseError(where() + ": unknown report key '" + key + "'");
        }
    }
    throw ParseError(path + ": missing [end]");
}

double hr_at_k(const EmbeddingIndex& index,
               const std::vector<std::pair<std::vector<double>, uint64_t>>&
                   query_and_positive,
               const std::vector<const std::unordered_set<uint64_t>*>& exclusions,
               size_t k) {
    if (k < 1) throw ContractError("hr_at_k: k must be >= 1");
    if (query_and_positive.empty())
        throw EvalError("hr_at_k: empty test set");
    if (!exclusions.empty() && exclusions.size() != query_and_positive.size())
        throw ShapeError("hr_at_k: exclusion list size mismatch");

    size_t hits = 0;
    std::vector<double> scores(index.ids.size());
    for (size_t row = 0; row < query_and_positive.size(); ++row) {
        const auto& [query, positive] = query_and_positive[row];
        if (query.size() != index.dim)
            throw ShapeError("hr_at_k: query dimension mismatch");
        kernels::matvec(index.vectors.data(), query.data(), scores.data(),
                        index.ids.size(), index.dim);
        const std::unordered_set<uint64_t>* excl =
            exclusions.empty() ? nullptr : exclusions[row];
        for (size_t i : select_top_k(scores, index.ids, k, excl)) {
            if (index.ids[i] == positive) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(query_and_positive.size());
}

namespace {

// Uniform distinct draw from catalog minus excluded, capped at the eligible
// count; mirrors the training sampler's two regimes.
std::vector<uint64_t> draw_unclicked(const std::vector<uint64_t>& ids,
                                     const std::unordered_set<uint64_t>& excluded,
                                     size_t want, Rng& rng) {
    size_t eligible = ids.size() - excluded.size();
    size_t n = std::min(want, eligible);
    std::vector<uint64_t> out;
    if (n == 0) return out;
    out.reserve(n);
    if (n * 2 < eligible) {
        std::unordered_set<uint64_t> taken;
        while (out.size() < n) {
            uint64_t id = ids[rng.below(ids.size())];
            if (excluded.count(id)) continue;
            if (!taken.insert(id).second) continue;
            out.push_back(id);
        }
    } else {
        std::vector<uint64_t> pool;
        pool.reserve(eligible);
        for (uint64_t id : ids)
            if (!excluded.count(id)) pool.push_back(id);
        for (size_t i = 0; i < n; ++i) {
            size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    }
    return out;
}

} // namespace

EvalReport evaluate(const ModelParams& model, const Dataset& train,
                    const Dataset& test, size_t k, uint64_t seed,
                    size_t auc_negatives, const EvalReport* baseline,
                    const std::string& baseline_name) {
    if (k < 1) throw ContractError("evaluate: k must be >= 1");
    if (auc_negatives < 1)
        throw ContractError("evaluate: need at least one AUC negative");
    if (test.interactions.empty()) throw EvalError("evaluate: empty test set");

    EvalReport report;
    report.k = k;
    report.seed = seed;
    if (baseline) report.baseline = baseline_name;

    auto train_pos = train.positives_by_type();
    auto test_pos = test.positives_by_type();

    for (const auto& type : model.config.types) {
        std::vector<const Interaction*> rows;
        for (const auto& it : test.interactions)
            if (it.type == type) rows.push_back(&it);
        if (rows.empty()) continue;

        auto cat_it = test.catalogs.find(type);
        if (cat_it == test.catalogs.end())
            throw EvalError("evaluate: no catalog for type '" + type + "'");
        EmbeddingIndex index = build_index(model, cat_it->second, type);

        std::unordered_map<uint64_t, size_t> id_to_row;
        for (size_t i = 0; i < index.ids.size(); ++i) id_to_row[index.ids[i]] = i;

        // Normalized user vectors, one per distinct test user, in id order.
        std::set<uint64_t> user_ids;
        for (const auto* it : rows) user_ids.insert(it->user);
        std::unordered_map<uint64_t, std::vector<double>> user_vecs;
        for (uint64_t uid : user_ids) {
            auto v = user_embedding(model, test.users.fields_of(uid));
            double s = 0.0;
            for (double x : v) s += x * x;
            double norm = std::sqrt(s);
            if (!(norm > 1e-12))
                throw DegenerateVectorError("evaluate: user " + std::to_string(uid) +
                                            " embeds to a near-zero vector");
            for (double& x : v) x /= norm;
            user_vecs.emplace(uid, std::move(v));
        }

        const auto& ttype_train = train_pos[type];
        const auto& ttype_test = test_pos[type];
        auto union_positives = [&](uint64_t uid) {
            std::unordered_set<uint64_t> u;
            if (auto it = ttype_train.find(uid); it != ttype_train.end())
                u.insert(it->second.begin(), it->second.end());
            if (auto it = ttype_test.find(uid); it != ttype_test.end())
                u.insert(it->second.begin(), it->second.end());
            return u;
        };

        // AUC over pooled (positive, sampled unclicked) pairs, test order.
        // Duplicate (user, content) rows collapse to one positive, matching
        // the matrix view of the interaction history.
        Rng neg_rng(stream_seed(seed, "eval-negatives-" + type));
        std::vector<double> scores;
        std::vector<int> labels;
        std::set<std::pair<uint64_t, uint64_t>> seen;
        for (const auto* it : rows) {
            if (!seen.emplace(it->user, it->content).second) continue;
            const auto& uvec = user_vecs.at(it->user);
            auto pos_row = id_to_row.find(it->content);
            if (pos_row == id_to_row.end())
                throw EvalError("evaluate: test content " +
                                std::to_string(it->content) + " not in catalog");
            auto excluded = union_positives(it->user);
            auto negs = draw_unclicked(index.ids, excluded, auc_negatives, neg_rng);
            if (negs.empty()) continue;
            auto dot_row = [&](size_t row) {
                auto r = index.row(row);
                double s = 0.0;
                for (size_t j = 0; j < index.dim; ++j) s += r[j] * uvec[j];
                return s;
            };
            scores.push_back(dot_row(pos_row->second));
            labels.push_back(1);
            for (uint64_t neg : negs) {
                scores.push_back(dot_row(id_to_row.at(neg)));
                labels.push_back(0);
            }
        }

        // HR@k: per-user ranking against the catalog minus train positives.
        size_t hits = 0, total = 0;
        std::vector<double> cat_scores(index.ids.size());
        for (uint64_t uid : user_ids) {
            const auto& uvec = user_vecs.at(uid);
            kernels::matvec(index.vectors.data(), uvec.data(), cat_scores.data(),
                            index.ids.size(), index.dim);
            const std::unordered_set<uint64_t>* excl = nullptr;
            std::unordered_set<uint64_t> train_excl;
            if (auto it = ttype_train.find(uid); it != ttype_train.end()) {
                train_excl.insert(it->second.begin(), it->second.end());
                excl = &train_excl;
            }
            auto top = select_top_k(cat_scores, index.ids, k, excl);
            std::unordered_set<uint64_t> top_ids;
            for (size_t i : top) top_ids.insert(index.ids[i]);
            for (uint64_t positive : ttype_test.at(uid)) {
                ++total;
                if (top_ids.count(positive)) ++hits;
            }
        }

        TypeMetrics m;
        m.type = type;
        m.auc = auc(scores, labels);
        m.hr = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
        m.test_positives = total;
        m.users = user_ids.size();
        m.auc_pairs = scores.size();
        if (baseline) {
            if (const TypeMetrics* b = baseline->find(type)) {
                m.relaimpr_auc = rela_impr(m.auc, b->auc, MetricKind::auc);
                m.relaimpr_hr = rela_impr(m.hr, b->hr, MetricKind::hr);
            }
        }
        report.per_type.push_back(std::move(m));
    }
    if (report.per_type.empty())
        throw EvalError("evaluate: test set has no interactions for configured types");
    return report;
}

} // namespace mvhan
