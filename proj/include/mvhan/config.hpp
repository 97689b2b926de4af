#pragma once

#include <map>
#include <string>
#include <vector>

#include "mvhan/data.hpp"
#include "mvhan/model.hpp"
#include "mvhan/train.hpp"

namespace mvhan {

// Merged view of the line-oriented `key = value` config file plus flag
// overrides. Every key is validated against the known set before any work
// starts.
struct RunConfig {
    uint64_t seed = 1;
    SyntheticConfig data;
    ModelConfig model;
    TrainConfig train; // train.model mirrors `model`
    size_t eval_k = 50;
    size_t eval_negatives = 50;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text, const std::string& origin);

    // Flag overrides; empty/nullopt-style sentinels mean "not given".
    void apply_override(const std::string& key, const std::string& value);
};

} // namespace mvhan
