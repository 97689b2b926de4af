#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mvhan {

struct GradCheckResult {
    std::string layer;
    double max_rel_err = 0.0;
};

// Central finite-difference checks (eps = 1e-5, 64-bit) for every layer
// kind: embedding gather, attention block, MLP, cosine head, and the
// sampled-softmax loss through a full tiny model. Runs `instances` random
// instances per layer and reports the max relative error of each layer.
std::vector<GradCheckResult> grad_check_suite(size_t instances, uint64_t seed);

} // namespace mvhan
