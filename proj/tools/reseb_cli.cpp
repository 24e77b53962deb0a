// Command-line front end: synth | ingest | window | train | eval | rank |
// ablate | explain. Every subcommand writes a manifest.json next to its
// outputs. Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "reseb/model.hpp"
#include "reseb/pipeline.hpp"
#include "reseb/ranking.hpp"
#include "reseb/shapley.hpp"
#include "reseb/synth.hpp"
#include "reseb/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reseb;

namespace {

constexpr const char* kVersion = "0.1.0";

int log_level() {
    const char* env = std::getenv("RESEB_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "quiet" || v == "0") return 0;
    if (v == "debug" || v == "2") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[reseb] " << msg << "\n";
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

class ManifestWriter {
public:
    ManifestWriter(std::string command, std::string out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {}

    json& extra() { return extra_; }
    void input(const std::string& key, const std::string& path) { inputs_[key] = path; }
    void config_text(const std::string& text) { config_hash_ = hex64(fnv1a(text)); }

    void write() {
        json j;
        // a subcommand may have written artifact metadata here already
        std::ifstream existing(out_dir_ + "/manifest.json");
        if (existing) {
            try {
                j = json::parse(existing);
            } catch (...) {
                j = json::object();
            }
        }
        j["command"] = command_;
        j["version"] = kVersion;
        j["config_hash"] = config_hash_;
        j["inputs"] = inputs_;
        j["out"] = out_dir_;
        j["elapsed_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start_).count();
        for (auto& [k, v] : extra_.items()) j[k] = v;
        fs::create_directories(out_dir_);
        std::ofstream os(out_dir_ + "/manifest.json");
        if (!os) throw ContractError("cannot write manifest in '" + out_dir_ + "'");
        os << j.dump(2) << "\n";
    }

private:
    std::string command_;
    std::string out_dir_;
    std::string config_hash_ = hex64(0);
    json inputs_ = json::object();
    json extra_ = json::object();
    std::chrono::steady_clock::time_point start_;
};

ColumnLayout load_layout(const std::string& path) {
    if (path.empty()) return ColumnLayout::defaults();
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open layout '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return ColumnLayout::from_json(ss.str());
}

std::string describe_options(const CLI::App& app) {
    std::string out;
    for (const CLI::Option* opt : app.get_options()) {
        if (!opt->get_lnames().empty()) {
            out += opt->get_lnames()[0];
            out += "=";
            for (const auto& r : opt->results()) out += r + ";";
            out += "\n";
        }
    }
    return out;
}

MetricRow report_to_row(const std::string& model, const std::string& cohort, int trial, const MetricsReport& r) {
    MetricRow row;
    row.model = model;
    row.cohort = cohort;
    row.trial = trial;
    row.accuracy = r.accuracy;
    row.precision = r.precision;
    row.recall = r.recall;
    row.f1 = r.f1;
    row.auc = r.auc;
    return row;
}

json trials_json(const TrialSet& set) {
    json per_trial = json::array();
    for (const auto& t : set.trials) {
        per_trial.push_back({{"accuracy", t.accuracy ? json(*t.accuracy) : json()},
                             {"precision", t.precision ? json(*t.precision) : json()},
                             {"recall", t.recall ? json(*t.recall) : json()},
                             {"f1", t.f1 ? json(*t.f1) : json()},
                             {"auc", t.auc ? json(*t.auc) : json()}});
    }
    json mean = {{"accuracy", set.mean.accuracy ? json(*set.mean.accuracy) : json()},
                 {"precision", set.mean.precision ? json(*set.mean.precision) : json()},
                 {"recall", set.mean.recall ? json(*set.mean.recall) : json()},
                 {"f1", set.mean.f1 ? json(*set.mean.f1) : json()},
                 {"auc", set.mean.auc ? json(*set.mean.auc) : json()}};
    return {{"trials", per_trial}, {"mean", mean}};
}

struct ModelFlags {
    std::string architecture = "rese_bilstm";
    std::int64_t hidden = 64, heads = 4, d_k = 16, d_head = 64;
    double dropout = 0.1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--architecture", architecture, "rese_bilstm|lstm|bilstm|gru|rnn|cnn|m1_e_bilstm|m2_a_bilstm|m4_rese_lstm");
        cmd->add_option("--hidden", hidden, "recurrent hidden width per direction");
        cmd->add_option("--heads", heads, "attention head count");
        cmd->add_option("--d-k", d_k, "attention key width");
        cmd->add_option("--d-head", d_head, "dense head hidden width");
        cmd->add_option("--dropout", dropout, "dropout rate after the residual norm");
    }

    ModelSpec spec(const CohortDataset& ds, std::uint64_t seed) const {
        ModelSpec s;
        s.arch = architecture_from_string(architecture);
        s.months = kInputMonths;
        s.features = ds.feature_width;
        s.hidden = hidden;
        s.heads = heads;
        s.d_k = d_k;
        s.d_head = d_head;
        s.dropout = dropout;
        s.seed = seed;
        return s;
    }
};

struct TrainFlags {
    int epochs = 30, batch_size = 64, trials = 1, workers = 1;
    double learning_rate = 1e-3;

    void attach(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch-size", batch_size, "mini-batch size");
        cmd->add_option("--learning-rate", learning_rate, "adam learning rate");
        cmd->add_option("--trials", trials, "independent trials (seed+k each)");
        cmd->add_option("--workers", workers, "parallel trial workers");
    }

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.learning_rate = learning_rate;
        c.seed = seed;
        return c;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"loan-performance default detection toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // subcommands may receive the global --seed/--config
    app.set_config("--config", "", "configuration file (INI sections per subcommand)");

    std::uint64_t seed = 7;
    app.add_option("--seed", seed, "base seed")->capture_default_str();

    // ---- synth ----
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic loan-performance file");
    SynthConfig synth_cfg;
    std::string synth_out = "out/synth";
    synth_cmd->add_option("--loans", synth_cfg.loans, "loan count");
    synth_cmd->add_option("--default-rate", synth_cfg.default_rate, "loan-level default rate");
    synth_cmd->add_option("--signal", synth_cfg.signal, "planted signal strength in [0,1]");
    synth_cmd->add_option("--min-months", synth_cfg.min_months, "minimum months for long loans");
    synth_cmd->add_option("--max-months", synth_cfg.max_months, "maximum loan length");
    synth_cmd->add_option("--short-fraction", synth_cfg.short_fraction, "fraction of sub-window loans");
    synth_cmd->add_option("--out", synth_out, "output directory");

    // ---- ingest ----
    auto* ingest_cmd = app.add_subcommand("ingest", "parse, validate and summarize a performance file");
    std::string ingest_records, ingest_layout, ingest_out = "out/ingest", ingest_delimiter;
    bool ingest_strict = false;
    ingest_cmd->add_option("--records", ingest_records, "input delimited file")->required();
    ingest_cmd->add_option("--layout", ingest_layout, "column layout JSON");
    ingest_cmd->add_option("--delimiter", ingest_delimiter, "override layout delimiter (single character)");
    ingest_cmd->add_flag("--strict", ingest_strict, "abort on malformed rows");
    ingest_cmd->add_option("--out", ingest_out, "output directory");

    // ---- window ----
    auto* window_cmd = app.add_subcommand("window", "build a leak-free windowed dataset");
    std::string window_records, window_layout, window_out = "out/dataset", window_cohort = "synthetic";
    std::int64_t window_stride = 1;
    double window_ratio = 0.70;
    bool window_balanced_test = false, window_no_standardize = false;
    window_cmd->add_option("--records", window_records, "input delimited file")->required();
    window_cmd->add_option("--layout", window_layout, "column layout JSON");
    window_cmd->add_option("--cohort", window_cohort, "cohort id recorded in the archive");
    window_cmd->add_option("--stride", window_stride, "window stride");
    window_cmd->add_option("--train-ratio", window_ratio, "loan-level train fraction");
    window_cmd->add_flag("--balanced-test", window_balanced_test, "undersample the test split too");
    window_cmd->add_flag("--no-standardize", window_no_standardize, "skip z-scoring numeric features");
    window_cmd->add_option("--out", window_out, "output directory");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset archive");
    std::string train_data, train_out = "out/train";
    ModelFlags train_model;
    TrainFlags train_flags;
    train_model.attach(train_cmd);
    train_flags.attach(train_cmd);
    train_cmd->add_option("--data", train_data, "dataset directory from `window`")->required();
    train_cmd->add_option("--out", train_out, "output directory");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset archive");
    std::string eval_data, eval_model, eval_out = "out/eval";
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--model", eval_model, "model checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "output directory");

    // ---- rank ----
    auto* rank_cmd = app.add_subcommand("rank", "fractional-rank aggregation over a metric table");
    std::string rank_metrics, rank_group = "cohort", rank_out = "out/rank";
    rank_cmd->add_option("--metrics", rank_metrics, "metric table CSV")->required();
    rank_cmd->add_option("--group", rank_group, "cohort|year");
    rank_cmd->add_option("--out", rank_out, "output directory");

    // ---- ablate ----
    auto* ablate_cmd = app.add_subcommand("ablate", "train the full model and its ablation variants");
    std::string ablate_data, ablate_out = "out/ablate", ablate_variants = "M1,M2,M3,M4";
    ModelFlags ablate_model;
    TrainFlags ablate_flags;
    ablate_model.attach(ablate_cmd);
    ablate_flags.attach(ablate_cmd);
    ablate_cmd->add_option("--data", ablate_data, "dataset directory")->required();
    ablate_cmd->add_option("--variants", ablate_variants, "comma-separated subset of M1,M2,M3,M4");
    ablate_cmd->add_option("--out", ablate_out, "output directory");

    // ---- explain ----
    auto* explain_cmd = app.add_subcommand("explain", "shapley attribution for a trained checkpoint");
    std::string explain_data, explain_model_path, explain_out = "out/explain";
    int explain_samples = 64, explain_perms = 16, explain_workers = 1, explain_background = 100, explain_topk = 50;
    explain_cmd->add_option("--data", explain_data, "dataset directory")->required();
    explain_cmd->add_option("--model", explain_model_path, "model checkpoint path")->required();
    explain_cmd->add_option("--samples", explain_samples, "test samples to explain");
    explain_cmd->add_option("--permutations", explain_perms, "permutations per sample");
    explain_cmd->add_option("--background-samples", explain_background, "train samples behind the background mean");
    explain_cmd->add_option("--top-k", explain_topk, "top-k cutoff for the month-count statistic");
    explain_cmd->add_option("--workers", explain_workers, "parallel sample workers");
    explain_cmd->add_option("--out", explain_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth_cmd->parsed()) {
            synth_cfg.seed = seed;
            ManifestWriter mf("synth", synth_out);
            mf.config_text(describe_options(*synth_cmd));
            auto records = generate(synth_cfg);
            fs::create_directories(synth_out);
            write_performance_file(synth_out + "/records.psv", records, ColumnLayout::defaults());
            auto summary = cohort_summary(records);
            mf.extra()["records"] = records.size();
            mf.extra()["loans"] = summary.loan_count;
            mf.extra()["default_rate"] = summary.default_rate;
            mf.extra()["seeds"] = {{"base", seed}};
            mf.write();
            info("synth: " + std::to_string(records.size()) + " records -> " + synth_out + "/records.psv");
        } else if (ingest_cmd->parsed()) {
            ColumnLayout layout = load_layout(ingest_layout);
            if (!ingest_delimiter.empty()) {
                if (ingest_delimiter.size() != 1) throw ConfigError("--delimiter must be a single character");
                layout.delimiter = ingest_delimiter[0];
            }
            ManifestWriter mf("ingest", ingest_out);
            mf.config_text(describe_options(*ingest_cmd));
            mf.input("records", ingest_records);
            ParseDiagnostics diag;
            auto records = parse_performance_file(ingest_records, layout, diag, ingest_strict);
            fs::create_directories(ingest_out);
            write_performance_file(ingest_out + "/records.psv", records, layout);
            auto summary = cohort_summary(records);
            json s = {{"loan_count", summary.loan_count},
                      {"mean_length", summary.mean_length},
                      {"median_length", summary.median_length},
                      {"default_rate", summary.default_rate}};
            std::ofstream os(ingest_out + "/summary.json");
            os << s.dump(2) << "\n";
            mf.extra()["summary"] = s;
            mf.extra()["diagnostics"] = {{"rows_total", diag.rows_total},
                                         {"rows_ok", diag.rows_ok},
                                         {"rows_missing_key", diag.rows_missing_key},
                                         {"rows_malformed", diag.rows_malformed},
                                         {"numeric_parse_failures", diag.numeric_parse_failures}};
            mf.write();
            info("ingest: " + std::to_string(diag.rows_ok) + "/" + std::to_string(diag.rows_total) + " rows ok");
        } else if (window_cmd->parsed()) {
            ColumnLayout layout = load_layout(window_layout);
            ManifestWriter mf("window", window_out);
            mf.config_text(describe_options(*window_cmd));
            mf.input("records", window_records);
            ParseDiagnostics pdiag;
            auto records = parse_performance_file(window_records, layout, pdiag);
            DatasetBuildOptions opts;
            opts.cohort_id = window_cohort;
            opts.stride = window_stride;
            opts.train_ratio = window_ratio;
            opts.seed = seed;
            opts.standardize = !window_no_standardize;
            opts.balanced_test = window_balanced_test;
            PipelineDiagnostics diag;
            CohortDataset ds = build_dataset(std::move(records), layout, opts, diag);
            save_dataset(window_out, ds, layout, opts, diag);
            mf.extra()["counts"] = {{"train", ds.train.size()}, {"test", ds.test.size()}};
            mf.extra()["seeds"] = {{"base", seed}};
            mf.write();
            info("window: train=" + std::to_string(ds.train.size()) + " test=" + std::to_string(ds.test.size()));
        } else if (train_cmd->parsed()) {
            ManifestWriter mf("train", train_out);
            mf.config_text(describe_options(*train_cmd));
            mf.input("data", train_data);
            CohortDataset ds = load_dataset(train_data);
            ModelSpec spec = train_model.spec(ds, seed);
            TrainConfig cfg = train_flags.config(seed);
            fs::create_directories(train_out);
            std::ofstream log(train_out + "/train.log");
            TrialSet set = run_trials(spec, ds, cfg, train_flags.trials, train_flags.workers, &log);

            MetricTable table;
            for (int k = 0; k < train_flags.trials; ++k) {
                table.rows.push_back(report_to_row(to_string(spec.arch), ds.cohort_id, k,
                                                   set.trials[static_cast<std::size_t>(k)]));
                save_model(train_out + "/trial" + std::to_string(k) + ".ckpt",
                           set.models[static_cast<std::size_t>(k)]);
            }
            save_metric_table(train_out + "/metrics.csv", table);
            mf.extra()["results"] = trials_json(set);
            mf.extra()["seeds"] = {{"base", seed}, {"trials", train_flags.trials}};
            mf.write();
            info("train: wrote " + std::to_string(train_flags.trials) + " trial checkpoints");
        } else if (eval_cmd->parsed()) {
            ManifestWriter mf("eval", eval_out);
            mf.config_text(describe_options(*eval_cmd));
            mf.input("data", eval_data);
            mf.input("model", eval_model);
            CohortDataset ds = load_dataset(eval_data);
            Model model = load_model(eval_model);
            MetricsReport rep = evaluate_model(model, ds.test);
            MetricTable table;
            table.rows.push_back(report_to_row(to_string(model.spec.arch), ds.cohort_id, -1, rep));
            fs::create_directories(eval_out);
            save_metric_table(eval_out + "/metrics.csv", table);
            mf.extra()["counts"] = {{"tp", rep.counts.tp}, {"tn", rep.counts.tn},
                                    {"fp", rep.counts.fp}, {"fn", rep.counts.fn}};
            mf.write();
            info("eval: metrics written to " + eval_out + "/metrics.csv");
        } else if (rank_cmd->parsed()) {
            ManifestWriter mf("rank", rank_out);
            mf.config_text(describe_options(*rank_cmd));
            mf.input("metrics", rank_metrics);
            MetricTable table = load_metric_table(rank_metrics);
            auto tables = rank_tables(table, rank_group);
            fs::create_directories(rank_out);
            save_rank_tables(rank_out + "/ranks.csv", tables);
            mf.extra()["groups"] = tables.size();
            mf.write();
            info("rank: " + std::to_string(tables.size()) + " groups -> " + rank_out + "/ranks.csv");
        } else if (ablate_cmd->parsed()) {
            ManifestWriter mf("ablate", ablate_out);
            mf.config_text(describe_options(*ablate_cmd));
            mf.input("data", ablate_data);
            CohortDataset ds = load_dataset(ablate_data);
            ModelSpec base = ablate_model.spec(ds, seed);
            if (base.arch != Architecture::rese_bilstm) {
                throw ConfigError("ablate requires the rese_bilstm base architecture");
            }
            TrainConfig cfg = ablate_flags.config(seed);

            std::vector<std::pair<std::string, ModelSpec>> lineup{{"rese_bilstm", base}};
            std::stringstream vs(ablate_variants);
            std::string tag;
            while (std::getline(vs, tag, ',')) {
                if (!tag.empty()) lineup.emplace_back(tag, ablation_variant(base, tag));
            }

            fs::create_directories(ablate_out);
            MetricTable table;
            json results = json::object();
            for (const auto& [name, spec] : lineup) {
                info("ablate: training " + name + " (" + to_string(spec.arch) + ")");
                TrialSet set = run_trials(spec, ds, cfg, ablate_flags.trials, ablate_flags.workers);
                for (int k = 0; k < ablate_flags.trials; ++k) {
                    table.rows.push_back(report_to_row(name, ds.cohort_id, k,
                                                       set.trials[static_cast<std::size_t>(k)]));
                }
                results[name] = trials_json(set);
            }
            save_metric_table(ablate_out + "/metrics.csv", table);
            mf.extra()["results"] = results;
            mf.extra()["seeds"] = {{"base", seed}, {"trials", ablate_flags.trials}};
            mf.write();
            info("ablate: report written to " + ablate_out + "/metrics.csv");
        } else if (explain_cmd->parsed()) {
            ManifestWriter mf("explain", explain_out);
            mf.config_text(describe_options(*explain_cmd));
            mf.input("data", explain_data);
            mf.input("model", explain_model_path);
            CohortDataset ds = load_dataset(explain_data);
            Model model = load_model(explain_model_path);
            auto background = background_mean(ds.train, explain_background, seed);

            std::vector<WindowSample> chosen;
            // deterministic pick: alternate labels where possible
            std::vector<std::size_t> pos, neg;
            for (std::size_t i = 0; i < ds.test.size(); ++i) {
                (ds.test[i].label == 1 ? pos : neg).push_back(i);
            }
            for (std::size_t i = 0; chosen.size() < static_cast<std::size_t>(explain_samples) &&
                                    (i < pos.size() || i < neg.size());
                 ++i) {
                if (i < pos.size() && chosen.size() < static_cast<std::size_t>(explain_samples)) {
                    chosen.push_back(ds.test[pos[i]]);
                }
                if (i < neg.size() && chosen.size() < static_cast<std::size_t>(explain_samples)) {
                    chosen.push_back(ds.test[neg[i]]);
                }
            }
            auto attributions = explain_model(model, chosen, background, explain_perms, seed, explain_workers);

            std::ifstream manifest_in(explain_data + "/manifest.json");
            json dm = json::parse(manifest_in);
            std::vector<std::string> feature_names = dm.at("feature_names").get<std::vector<std::string>>();

            fs::create_directories(explain_out);
            write_attributions(explain_out + "/attributions.csv", attributions, feature_names);
            write_summary_plot_data(explain_out + "/summary_plot.csv", attributions, feature_names);
            ImportanceReport rep = importance_report(attributions, feature_names, explain_topk);

            json imp = json::object();
            for (const auto& [feature, count] : rep.top_month_counts) imp[feature] = count;
            json cols = json::array();
            const std::size_t f_count = feature_names.size();
            for (std::size_t c = 0; c < rep.mean_abs.size(); ++c) {
                cols.push_back({{"month", c / f_count + 1},
                                {"feature", feature_names[c % f_count]},
                                {"mean_abs_shap", rep.mean_abs[c]},
                                {"rank", rep.rank[c]}});
            }
            std::ofstream os(explain_out + "/importance.json");
            os << json{{"top_k", rep.top_k}, {"top_month_counts", imp}, {"columns", cols}}.dump(2) << "\n";
            mf.extra()["explained_samples"] = chosen.size();
            mf.extra()["n_permutations"] = explain_perms;
            mf.extra()["background"] = {{"samples", explain_background}, {"seed", seed}};
            mf.extra()["model_checkpoint"] = explain_model_path;
            mf.write();
            info("explain: " + std::to_string(chosen.size()) + " samples -> " + explain_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
