#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mvhan/data.hpp"
#include "mvhan/model.hpp"
#include "mvhan/rng.hpp"
#include "mvhan/tensor.hpp"

namespace mvhan {

enum class OptKind { sgd_momentum, adam };

std::string opt_kind_str(OptKind k);
OptKind opt_kind_from(const std::string& s);

struct TrainConfig {
    ModelConfig model;
    size_t r = 20;      // negatives per positive
    size_t batch = 256;
    size_t epochs = 10;
    OptKind optimizer = OptKind::adam;
    double lr = 1e-3;
    double momentum = 0.9; // sgd-momentum only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
};

// Type-homogeneous batch; content rows hold the positive first, then the r
// negatives of each example.
struct ExampleBatch {
    std::string type;
    size_t n = 0;
    size_t r = 0;
    std::vector<uint32_t> user_ids;    // n x F_u, [example][field]
    std::vector<uint32_t> content_ids; // n*(r+1) x F_c
};

// Uniform negative sampling without replacement over the type's catalog
// minus the user's known positives.
class NegativeSampler {
public:
    explicit NegativeSampler(const Dataset& train);

    std::vector<uint64_t> sample(uint64_t user, const std::string& type, size_t r,
                                 Rng& rng) const;

    const std::unordered_set<uint64_t>* positives_of(uint64_t user,
                                                     const std::string& type) const;

private:
    std::map<std::string, std::vector<uint64_t>> catalog_ids_;
    std::map<std::string, std::unordered_map<uint64_t, std::unordered_set<uint64_t>>>
        positives_;
};

struct PlannedBatch {
    std::string type;
    std::vector<size_t> rows; // indices into that type's example list
};

// One epoch's batch order: per-type shuffle, chunk, then round-robin across
// types until each is exhausted (strict alternation while all have batches).
std::vector<PlannedBatch> plan_epoch(const std::map<std::string, size_t>& counts,
                                     const std::vector<std::string>& type_order,
                                     size_t batch_size, Rng& rng);

ExampleBatch assemble_batch(const Dataset& train,
                            const std::vector<const Interaction*>& rows,
                            const NegativeSampler& sampler, size_t r, Rng& rng);

// Per-row softmax cross-entropy over {positive, negatives} cosine logits
// divided by the model temperature; mean over the batch.
Tensor sampled_softmax_loss(const ModelParams& model, const ExampleBatch& batch);

struct OptimizerState {
    struct Slot {
        std::vector<double> m; // momentum / first moment
        std::vector<double> v; // second moment (adam)
    };
    std::vector<Slot> slots; // aligned with ModelParams::named_params()
    size_t step = 0;
};

OptimizerState make_optimizer_state(const ModelParams& model,
                                    const TrainConfig& config);

// Applies one update from the gradients currently stored on the parameters.
void optimizer_step(const std::vector<std::pair<std::string, Tensor>>& params,
                    OptimizerState& state, const TrainConfig& config);

// Forward + backward + update for one batch; returns the loss.
double train_step(const ModelParams& model,
                  const std::vector<std::pair<std::string, Tensor>>& params,
                  const ExampleBatch& batch, OptimizerState& state,
                  const TrainConfig& config);

struct StepLog {
    size_t step = 0;
    size_t epoch = 0;
    std::string type;
    double loss = 0.0;
};

struct TrainResult {
    ModelParams model;
    std::vector<StepLog> log;
};

std::string metrics_text(const std::vector<StepLog>& log);
void write_metrics(const std::vector<StepLog>& log, const std::string& path);

// Full loop: alternating type-homogeneous batches, fresh negatives per
// epoch, deterministic under (config, data, seed).
TrainResult train(const TrainConfig& config, const Dataset& train_data);

} // namespace mvhan
