#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvhan/data.hpp"
#include "mvhan/index.hpp"
#include "mvhan/model.hpp"

namespace mvhan {

// Mann-Whitney AUC: probability a random positive outranks a random
// negative, ties credited 0.5. Rank-based, O(n log n).
double auc(std::span<const double> scores, std::span<const int> labels);

enum class MetricKind { auc, hr };

// Percent improvement: AUC against the 0.5 random baseline,
// ((v - 0.5)/(b - 0.5) - 1) * 100; HR a plain ratio, (v/b - 1) * 100.
// Unrounded; reports round to 2 decimals.
double rela_impr(double value, double baseline, MetricKind kind);

struct TypeMetrics {
    std::string type;
    double auc = 0.0;
    double hr = 0.0;
    size_t test_positives = 0;
    size_t users = 0;
    size_t auc_pairs = 0;
    // Present when the report was computed against a baseline.
    std::optional<double> relaimpr_auc;
    std::optional<double> relaimpr_hr;
};

struct EvalReport {
    size_t k = 0;
    uint64_t seed = 0;
    std::string baseline; // empty when none
    std::vector<TypeMetrics> per_type;

    const TypeMetrics* find(const std::string& type) const;
};

std::string report_text(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);
EvalReport parse_report(const std::string& path);

// Hit ratio through the exact index: for each test positive, rank the type's
// catalog minus the user's train positives and count whether the positive
// lands in the top k.
double hr_at_k(const EmbeddingIndex& index,
               const std::vector<std::pair<std::vector<double>, uint64_t>>&
                   query_and_positive,
               const std::vector<const std::unordered_set<uint64_t>*>& exclusions,
               size_t k);

// Full harness: per-type AUC over (positive, sampled unclicked negatives)
// and HR@k via retrieval; RelaImpr attached when a baseline is supplied.
EvalReport evaluate(const ModelParams& model, const Dataset& train,
                    const Dataset& test, size_t k, uint64_t seed,
                    size_t auc_negatives = 50,
                    const EvalReport* baseline = nullptr,
                    const std::string& baseline_name = "");

} // namespace mvhan
