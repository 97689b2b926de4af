#include "mvhan/train.hpp"

#include <algorithm>
#include <cmath>

#include "mvhan/io.hpp"

namespace mvhan {

std::string opt_kind_str(OptKind k) {
    return k == OptKind::adam ? "adam" : "sgd-momentum";
}

OptKind opt_kind_from(const std::string& s) {
    if (s == "adam") return OptKind::adam;
    if (s == "sgd-momentum") return OptKind::sgd_momentum;
    throw ConfigError("unknown optimizer '" + s + "', expected adam|sgd-momentum");
}

NegativeSampler::NegativeSampler(const Dataset& train) {
    for (const auto& [type, catalog] : train.catalogs) {
        auto& ids = catalog_ids_[type];
        ids.reserve(catalog.items.size());
        for (const auto& item : catalog.items) ids.push_back(item.id);
    }
    for (const auto& it : train.interactions)
        positives_[it.type][it.user].insert(it.content);
}

const std::unordered_set<uint64_t>* NegativeSampler::positives_of(
    uint64_t user, const std::string& type) const {
    auto tit = positives_.find(type);
    if (tit == positives_.end()) return nullptr;
    auto uit = tit->second.find(user);
    return uit == tit->second.end() ? nullptr : &uit->second;
}

std::vector<uint64_t> NegativeSampler::sample(uint64_t user, const std::string& type,
                                              size_t r, Rng& rng) const {
    if (r == 0) return {};
    auto cit = catalog_ids_.find(type);
    if (cit == catalog_ids_.end())
        throw SamplingError("sample_negatives: no catalog for type '" + type + "'");
    const auto& ids = cit->second;
    const auto* pos = positives_of(user, type);
    size_t n_pos = pos ? pos->size() : 0;
    if (ids.size() < n_pos + r)
        throw SamplingError("sample_negatives: type '" + type + "' has only " +
                            std::to_string(ids.size() - n_pos) +
                            " eligible items, need " + std::to_string(r));

    std::vector<uint64_t> out;
    out.reserve(r);
    size_t eligible = ids.size() - n_pos;
    if (r * 2 < eligible) {
        // Rejection against positives and prior picks.
        std::unordered_set<uint64_t> taken;
        while (out.size() < r) {
            uint64_t id = ids[rng.below(ids.size())];
            if (pos && pos->count(id)) continue;
            if (!taken.insert(id).second) continue;
            out.push_back(id);
        }
    } else {
        // Dense draw: partial Fisher-Yates over the materialized eligible set.
        std::vector<uint64_t> pool;
        pool.reserve(eligible);
        for (uint64_t id : ids)
            if (!pos || !pos->count(id)) pool.push_back(id);
        for (size_t i = 0; i < r; ++i) {
            size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    }
    return out;
}

std::vector<PlannedBatch> plan_epoch(const std::map<std::string, size_t>& counts,
                                     const std::vector<std::string>& type_order,
                                     size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw ConfigError("plan_epoch: batch size must be >= 1");
    size_t total = 0;
    for (const auto& [type, n] : counts) total += n;
    if (total == 0) throw ConfigError("plan_epoch: all datasets empty");
    for (const auto& [type, n] : counts) {
        (void)n;
        if (std::find(type_order.begin(), type_order.end(), type) == type_order.end())
            throw ConfigError("plan_epoch: type '" + type + "' missing from order");
    }

    // Shuffles consume the stream in declared type order, then chunk.
    std::map<std::string, std::vector<std::vector<size_t>>> chunks;
    for (const auto& type : type_order) {
        auto it = counts.find(type);
        if (it == counts.end() || it->second == 0) continue;
        std::vector<size_t> idx(it->second);
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<size_t>(rng.below(i))]);
        auto& list = chunks[type];
        for (size_t off = 0; off < idx.size(); off += batch_size) {
            size_t end = std::min(off + batch_size, idx.size());
            list.emplace_back(idx.begin() + off, idx.begin() + end);
        }
    }

    std::vector<PlannedBatch> out;
    std::map<std::string, size_t> cursor;
    bool emitted = true;
    while (emitted) {
        emitted = false;
        for (const auto& type : type_order) {
            auto it = chunks.find(type);
            if (it == chunks.end()) continue;
            size_t& c = cursor[type];
            if (c < it->second.size()) {
                out.push_back({type, std::move(it->second[c])});
                ++c;
                emitted = true;
            }
        }
    }
    return out;
}

ExampleBatch assemble_batch(const Dataset& train,
                            const std::vector<const Interaction*>& rows,
                            const NegativeSampler& sampler, size_t r, Rng& rng) {
    if (rows.empty()) throw ContractError("assemble_batch: empty batch");
    ExampleBatch b;
    b.type = rows[0]->type;
    b.n = rows.size();
    b.r = r;
    size_t fu = train.schema.user_fields().size();
    size_t fc = train.schema.content_fields().size();
    b.user_ids.reserve(b.n * fu);
    b.content_ids.reserve(b.n * (r + 1) * fc);
    const Catalog& catalog = train.catalogs.at(b.type);
    for (const Interaction* it : rows) {
        if (it->type != b.type)
            throw ContractError("assemble_batch: mixed types in batch");
        b.user_ids.insert(b.user_ids.end(), it->user_fields.begin(),
                          it->user_fields.end());
        b.content_ids.insert(b.content_ids.end(), it->content_fields.begin(),
                             it->content_fields.end());
        for (uint64_t neg : sampler.sample(it->user, b.type, r, rng)) {
            const auto& f = catalog.fields_of(neg);
            b.content_ids.insert(b.content_ids.end(), f.begin(), f.end());
        }
    }
    return b;
}

Tensor sampled_softmax_loss(const ModelParams& model, const ExampleBatch& batch) {
    if (batch.n == 0) throw ContractError("sampled_softmax_loss: empty batch");
    Tensor user = user_tower_batch(model, batch.user_ids, batch.n);
    Tensor content = content_tower_batch(model, batch.type, batch.content_ids,
                                         batch.n * (batch.r + 1));
    Tensor logits = grouped_dot(l2_normalize_rows(user), l2_normalize_rows(content),
                                batch.r + 1);
    return softmax_xent_col0(scale(logits, 1.0 / model.config.temperature));
}

OptimizerState make_optimizer_state(const ModelParams& model,
                                    const TrainConfig& config) {
    OptimizerState state;
    for (const auto& [name, tensor] : model.named_params()) {
        (void)name;
        OptimizerState::Slot slot;
        slot.m.assign(tensor.size(), 0.0);
        if (config.optimizer == OptKind::adam) slot.v.assign(tensor.size(), 0.0);
        state.slots.push_back(std::move(slot));
    }
    return state;
}

void optimizer_step(const std::vector<std::pair<std::string, Tensor>>& params,
                    OptimizerState& state, const TrainConfig& config) {
    if (state.slots.size() != params.size())
        throw ShapeError("optimizer_step: state has " +
                         std::to_string(state.slots.size()) + " slots for " +
                         std::to_string(params.size()) + " params");
    ++state.step;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor t = params[p].second;
        auto w = t.values_mut();
        auto g = t.grad();
        auto& slot = state.slots[p];
        if (slot.m.size() != w.size())
            throw ShapeError("optimizer_step: slot shape mismatch for '" +
                             params[p].first + "'");
        if (config.optimizer == OptKind::sgd_momentum) {
            for (size_t i = 0; i < w.size(); ++i) {
                slot.m[i] = config.momentum * slot.m[i] + g[i];
                w[i] -= config.lr * slot.m[i];
            }
        } else {
            double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
            double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
            for (size_t i = 0; i < w.size(); ++i) {
                slot.m[i] = config.beta1 * slot.m[i] + (1.0 - config.beta1) * g[i];
                slot.v[i] = config.beta2 * slot.v[i] + (1.0 - config.beta2) * g[i] * g[i];
                double mhat = slot.m[i] / bc1;
                double vhat = slot.v[i] / bc2;
                w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.adam_eps);
            }
        }
    }
}

double train_step(const ModelParams& model,
                  const std::vector<std::pair<std::string, Tensor>>& params,
                  const ExampleBatch& batch, OptimizerState& state,
                  const TrainConfig& config) {
    for (auto& [name, tensor] : params) {
        (void)name;
        Tensor t = tensor;
        t.zero_grad();
    }
    Tensor loss = sampled_softmax_loss(model, batch);
    backward(loss);
    optimizer_step(params, state, config);
    return loss.item();
}

std::string metrics_text(const std::vector<StepLog>& log) {
    std::string out;
    for (const auto& s : log) {
        out += std::to_string(s.step);
        out += '\t';
        out += std::to_string(s.epoch);
        out += '\t';
        out += s.type;
        out += '\t';
        out += format_double_short(s.loss);
        out += '\n';
    }
    return out;
}

void write_metrics(const std::vector<StepLog>& log, const std::string& path) {
    write_file_atomic(path, metrics_text(log));
}

TrainResult train(const TrainConfig& config, const Dataset& train_data) {
    if (config.r < 1) throw ConfigError("train: r must be >= 1");
    if (config.batch < 1) throw ConfigError("train: batch size must be >= 1");

    ModelParams model =
        build_variant(config.model, train_data.schema, config.seed);
    auto params = model.named_params();
    OptimizerState state = make_optimizer_state(model, config);
    NegativeSampler sampler(train_data);

    std::map<std::string, std::vector<const Interaction*>> by_type;
    for (const auto& it : train_data.interactions) {
        if (std::find(config.model.types.begin(), config.model.types.end(),
                      it.type) != config.model.types.end())
            by_type[it.type].push_back(&it);
    }
    std::map<std::string, size_t> counts;
    for (const auto& [type, rows] : by_type) counts[type] = rows.size();
    if (by_type.empty())
        throw ConfigError("train: no interactions for configured types");

    Rng schedule_rng(stream_seed(config.seed, "schedule"));
    Rng negative_rng(stream_seed(config.seed, "negatives"));

    TrainResult result{std::move(model), {}};
    size_t step = 0;
    for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (const auto& planned :
             plan_epoch(counts, config.model.types, config.batch, schedule_rng)) {
            const auto& pool = by_type.at(planned.type);
            std::vector<const Interaction*> rows;
            rows.reserve(planned.rows.size());
            for (size_t idx : planned.rows) rows.push_back(pool[idx]);
            ExampleBatch batch =
                assemble_batch(train_data, rows, sampler, config.r, negative_rng);
            double loss = train_step(result.model, params, batch, state, config);
            result.log.push_back({++step, epoch, planned.type, loss});
        }
    }
    return result;
}

} // namespace mvhan
