// mvhan: data generation, training, evaluation, export, retrieval, ablation
// sweeps, and gradient self-checks for the multi-view two-tower retriever.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "mvhan/config.hpp"
#include "mvhan/data.hpp"
#include "mvhan/eval.hpp"
#include "mvhan/gradcheck.hpp"
#include "mvhan/index.hpp"
#include "mvhan/io.hpp"
#include "mvhan/model.hpp"
#include "mvhan/train.hpp"

namespace fs = std::filesystem;
using namespace mvhan;

namespace {

struct CommonFlags {
    std::string config;
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string baseline;
    std::string variant;
    std::string type;
    std::string index;
    std::string query;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> user;
    std::optional<size_t> k;
    std::optional<size_t> epochs;
    std::optional<size_t> r;
    std::optional<double> temperature;
};

RunConfig load_run_config(const CommonFlags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::from_file(f.config);
    if (f.seed) cfg.apply_override("seed", std::to_string(*f.seed));
    if (f.epochs) cfg.apply_override("train.epochs", std::to_string(*f.epochs));
    if (f.r) cfg.apply_override("train.r", std::to_string(*f.r));
    if (f.temperature)
        cfg.apply_override("model.temperature", format_double_short(*f.temperature));
    if (!f.variant.empty()) cfg.apply_override("model.variant", f.variant);
    if (f.k) cfg.apply_override("eval.k", std::to_string(*f.k));
    return cfg;
}

Dataset load_data_dir(const std::string& dir,
                      const std::vector<std::string>* allowed_types) {
    FeatureSchema schema = read_schema((fs::path(dir) / "schema.tsv").string());
    return parse_interactions((fs::path(dir) / "interactions.tsv").string(), schema,
                              allowed_types);
}

int cmd_gen_data(const CommonFlags& f) {
    RunConfig cfg = load_run_config(f);
    fs::create_directories(f.out);
    Dataset ds = generate_synthetic(cfg.data, cfg.seed);
    write_schema(ds.schema, (fs::path(f.out) / "schema.tsv").string());
    write_interactions(ds, (fs::path(f.out) / "interactions.tsv").string());
    std::cout << "wrote " << ds.interactions.size() << " interactions, "
              << ds.users.size() << " users to " << f.out << "\n";
    return 0;
}

int cmd_train(const CommonFlags& f) {
    RunConfig cfg = load_run_config(f);
    Dataset full = load_data_dir(f.data, &cfg.model.types);
    auto [train_split, test_split] = temporal_split(full, cfg.data.split_threshold());
    (void)test_split;

    TrainResult result = train(cfg.train, train_split);
    fs::create_directories(f.out);
    save_checkpoint(result.model, (fs::path(f.out) / "checkpoint.txt").string());
    write_metrics(result.log, (fs::path(f.out) / "metrics.tsv").string());
    double last = result.log.empty() ? 0.0 : result.log.back().loss;
    std::cout << "trained " << variant_str(cfg.model.variant) << " for "
              << result.log.size() << " steps, final loss "
              << format_double_short(last) << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& f) {
    RunConfig cfg = load_run_config(f);
    ModelParams model = load_checkpoint(f.checkpoint);
    Dataset full = load_data_dir(f.data, nullptr);
    auto [train_split, test_split] = temporal_split(full, cfg.data.split_threshold());

    EvalReport baseline;
    bool have_baseline = !f.baseline.empty();
    if (have_baseline) baseline = parse_report(f.baseline);
    EvalReport report = evaluate(model, train_split, test_split, cfg.eval_k,
                                 f.seed.value_or(cfg.seed), cfg.eval_negatives,
                                 have_baseline ? &baseline : nullptr,
                                 have_baseline ? f.baseline : "");
    std::string text = report_text(report);
    std::cout << text;
    if (!f.out.empty()) write_file_atomic(f.out, text);
    return 0;
}

int cmd_export(const CommonFlags& f) {
    ModelParams model = load_checkpoint(f.checkpoint);
    Dataset full = load_data_dir(f.data, nullptr);
    auto it = full.catalogs.find(f.type);
    if (it == full.catalogs.end())
        throw ConfigError("export: no contents of type '" + f.type + "' in " + f.data);
    export_embeddings(model, it->second, f.type, f.out);
    std::cout << "exported " << it->second.size() << " vectors of type " << f.type
              << " to " << f.out << "\n";
    return 0;
}

int cmd_retrieve(const CommonFlags& f) {
    EmbeddingIndex index = load_index(f.index);
    std::vector<double> query;
    if (!f.query.empty()) {
        for (const auto& tok : split(f.query, ','))
            query.push_back(parse_double(strip(tok), "--query"));
    } else if (f.user) {
        if (f.checkpoint.empty() || f.data.empty())
            throw ConfigError("retrieve: --user needs --checkpoint and --data");
        ModelParams model = load_checkpoint(f.checkpoint);
        Dataset full = load_data_dir(f.data, nullptr);
        query = user_embedding(model, full.users.fields_of(*f.user));
    } else {
        throw ConfigError("retrieve: give --query or --user");
    }
    for (const auto& [id, score] : top_k(index, query, f.k.value_or(10)))
        std::cout << id << "\t" << format_double_short(score) << "\n";
    return 0;
}

int cmd_ablate(const CommonFlags& f) {
    RunConfig cfg = load_run_config(f);
    Dataset full = load_data_dir(f.data, &cfg.model.types);
    auto [train_split, test_split] = temporal_split(full, cfg.data.split_threshold());
    fs::create_directories(f.out);

    std::string baseline_variant = f.baseline.empty() ? "ttm" : f.baseline;
    const std::vector<std::string> variants = {"mv-han", "wo-se",  "wo-fe",
                                               "mlp",    "ttm",    "ttm-all"};
    if (std::find(variants.begin(), variants.end(), baseline_variant) ==
        variants.end())
        throw ConfigError("ablate: unknown baseline variant '" + baseline_variant +
                          "'");

    std::map<std::string, EvalReport> reports;
    for (const auto& name : variants) {
        TrainConfig tc = cfg.train;
        tc.model.variant = variant_from(name);
        EvalReport report;
        if (tc.model.variant == Variant::ttm_single) {
            // One independent single-type model per content type.
            report.k = cfg.eval_k;
            report.seed = cfg.seed;
            for (const auto& type : cfg.model.types) {
                TrainConfig per = tc;
                per.model.types = {type};
                TrainResult r = train(per, train_split);
                EvalReport one = evaluate(r.model, train_split, test_split,
                                          cfg.eval_k, cfg.seed, cfg.eval_negatives);
                report.per_type.push_back(one.per_type.at(0));
            }
        } else {
            TrainResult r = train(tc, train_split);
            report = evaluate(r.model, train_split, test_split, cfg.eval_k,
                              cfg.seed, cfg.eval_negatives);
        }
        write_report(report, (fs::path(f.out) / ("report_" + name + ".txt")).string());
        reports[name] = report;
        std::cout << "evaluated " << name << "\n";
    }

    const EvalReport& base = reports.at(baseline_variant);
    std::ostringstream out;
    out << "mvhan-ablation v1\n";
    out << "baseline = " << baseline_variant << "\n";
    out << "k = " << cfg.eval_k << "\n";
    out << "seed = " << cfg.seed << "\n";
    for (const auto& type : cfg.model.types) {
        out << "[type " << type << "]\n";
        out << "variant\tauc\thr\trelaimpr_auc\trelaimpr_hr\n";
        for (const auto& name : variants) {
            const TypeMetrics* m = reports.at(name).find(type);
            const TypeMetrics* b = base.find(type);
            if (!m || !b) continue;
            char auc_pct[32], hr_pct[32];
            std::snprintf(auc_pct, sizeof(auc_pct), "%.2f%%",
                          rela_impr(m->auc, b->auc, MetricKind::auc));
            std::snprintf(hr_pct, sizeof(hr_pct), "%.2f%%",
                          rela_impr(m->hr, b->hr, MetricKind::hr));
            out << name << "\t" << format_double_short(m->auc) << "\t"
                << format_double_short(m->hr) << "\t" << auc_pct << "\t" << hr_pct
                << "\n";
        }
    }
    std::string text = out.str();
    std::cout << text;
    write_file_atomic((fs::path(f.out) / "ablation.txt").string(), text);
    return 0;
}

int cmd_grad_check(const CommonFlags& f) {
    bool ok = true;
    for (const auto& r : grad_check_suite(10, f.seed.value_or(1))) {
        bool pass = r.max_rel_err < 1e-4;
        ok = ok && pass;
        std::cout << (pass ? "ok   " : "FAIL ") << r.layer << " max_rel_err "
                  << format_double_short(r.max_rel_err) << "\n";
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view two-tower retrieval: train, evaluate, retrieve"};
    app.require_subcommand(1);
    CommonFlags f;

    auto add_common = [&f](CLI::App* cmd) {
        cmd->add_option("--config", f.config, "config file (key = value lines)");
        cmd->add_option("--seed", f.seed, "root random seed");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    gen->add_option("--out", f.out, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model variant");
    add_common(tr);
    tr->add_option("--data", f.data, "data directory")->required();
    tr->add_option("--out", f.out, "output directory")->required();
    tr->add_option("--variant", f.variant, "model variant override");
    tr->add_option("--epochs", f.epochs, "epoch override");
    tr->add_option("--r", f.r, "negatives per positive override");
    tr->add_option("--temperature", f.temperature, "softmax temperature override");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev);
    ev->add_option("--data", f.data, "data directory")->required();
    ev->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
    ev->add_option("--k", f.k, "retrieval depth for HR@k");
    ev->add_option("--baseline", f.baseline, "baseline report file for RelaImpr");
    ev->add_option("--out", f.out, "report output file");

    auto* ex = app.add_subcommand("export", "export content embeddings");
    add_common(ex);
    ex->add_option("--data", f.data, "data directory")->required();
    ex->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
    ex->add_option("--type", f.type, "content type")->required();
    ex->add_option("--out", f.out, "index output file")->required();

    auto* re = app.add_subcommand("retrieve", "top-k lookup against an index");
    add_common(re);
    re->add_option("--index", f.index, "index file")->required();
    re->add_option("--k", f.k, "number of results");
    re->add_option("--user", f.user, "user id (needs --checkpoint and --data)");
    re->add_option("--query", f.query, "comma-separated query vector");
    re->add_option("--checkpoint", f.checkpoint, "checkpoint file");
    re->add_option("--data", f.data, "data directory");

    auto* ab = app.add_subcommand("ablate", "train and compare all variants");
    add_common(ab);
    ab->add_option("--data", f.data, "data directory")->required();
    ab->add_option("--out", f.out, "output directory")->required();
    ab->add_option("--baseline", f.baseline, "baseline variant for RelaImpr");

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
    add_common(gc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(f);
        if (tr->parsed()) return cmd_train(f);
        if (ev->parsed()) return cmd_eval(f);
        if (ex->parsed()) return cmd_export(f);
        if (re->parsed()) return cmd_retrieve(f);
        if (ab->parsed()) return cmd_ablate(f);
        if (gc->parsed()) return cmd_grad_check(f);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
