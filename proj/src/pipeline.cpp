#include "reseb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "reseb/checkpoint.hpp"
#include "reseb/rng.hpp"

namespace reseb {

namespace {

std::optional<double> numeric_field(const MonthlyRecord& r, const std::string& name) {
    if (name == "current_actual_upb") return r.current_actual_upb;
    if (name == "interest_bearing_upb") return r.interest_bearing_upb;
    if (name == "current_deferred_upb") return r.current_deferred_upb;
    if (name == "current_ir") return r.current_ir;
    if (name == "eltv") return r.eltv;
    if (name == "current_month_modification_cost") return r.current_month_modification_cost;
    throw ConfigError("layout names unknown numeric feature '" + name + "'");
}

const std::string& categorical_field(const MonthlyRecord& r, const std::string& name) {
    if (name == "modification_flag") return r.modification_flag;
    if (name == "delinquency_due_to_disaster") return r.delinquency_due_to_disaster;
    if (name == "borrower_assistance_status_code") return r.borrower_assistance_status_code;
    throw ConfigError("layout names unknown categorical field '" + name + "'");
}

} // namespace

NumArray engineer_features(const std::vector<MonthlyRecord>& loan_records, const ColumnLayout& layout,
                           PipelineDiagnostics* diag) {
    const std::int64_t L = static_cast<std::int64_t>(loan_records.size());
    const std::int64_t F = layout.feature_width();
    if (L == 0) throw ContractError("engineer_features: no records");
    NumArray out = NumArray::zeros({L, F});

    for (std::int64_t i = 0; i < L; ++i) {
        const MonthlyRecord& r = loan_records[static_cast<std::size_t>(i)];
        std::int64_t col = 0;
        for (const auto& name : layout.numeric_features) {
            double v = 0.0;
            if (name.size() > 6 && name.rfind("_delta") == name.size() - 6) {
                const std::string base = name.substr(0, name.size() - 6);
                if (i > 0) {
                    const double cur = numeric_field(r, base).value_or(0.0);
                    const double prev =
                        numeric_field(loan_records[static_cast<std::size_t>(i - 1)], base).value_or(0.0);
                    v = cur - prev;
                }
                // first month of a loan keeps both deltas at 0
            } else {
                v = numeric_field(r, name).value_or(0.0); // missing numerics impute to 0
            }
            out.at(i, col++) = v;
        }
        for (const auto& group : layout.one_hot_groups) {
            const std::string& raw = categorical_field(r, group.field);
            std::string level = raw.empty() ? group.missing_level : raw;
            bool known = false;
            for (const auto& lvl : group.levels) known = known || lvl == level;
            if (!known) {
                if (diag) ++diag->unknown_categories;
                level = group.missing_level;
            }
            for (const auto& lvl : group.levels) {
                out.at(i, col++) = (lvl == level) ? 1.0 : 0.0;
            }
        }
    }
    return out;
}

std::vector<LoanSeries> build_series(std::vector<MonthlyRecord> records, const ColumnLayout& layout,
                                     PipelineDiagnostics& diag) {
    std::map<std::string, std::vector<MonthlyRecord>> by_loan;
    for (auto& r : records) by_loan[r.loan_id].push_back(std::move(r));
    diag.loans += static_cast<std::int64_t>(by_loan.size());

    std::vector<LoanSeries> out;
    for (auto& [loan_id, rows] : by_loan) {
        std::sort(rows.begin(), rows.end(),
                  [](const MonthlyRecord& a, const MonthlyRecord& b) { return a.period < b.period; });
        // drop duplicate periods, keep the first occurrence
        std::vector<MonthlyRecord> dedup;
        for (auto& r : rows) {
            if (!dedup.empty() && dedup.back().period == r.period) {
                ++diag.duplicate_periods;
                continue;
            }
            dedup.push_back(std::move(r));
        }
        // split into contiguous calendar runs
        std::size_t run_start = 0;
        for (std::size_t i = 1; i <= dedup.size(); ++i) {
            const bool gap = i < dedup.size() && dedup[i].period.index() != dedup[i - 1].period.index() + 1;
            if (i == dedup.size() || gap) {
                if (gap) ++diag.contiguity_gaps;
                std::vector<MonthlyRecord> run(dedup.begin() + static_cast<std::ptrdiff_t>(run_start),
                                               dedup.begin() + static_cast<std::ptrdiff_t>(i));
                LoanSeries s;
                s.loan_id = loan_id;
                s.start = run.front().period;
                s.features = engineer_features(run, layout, &diag);
                s.clds.reserve(run.size());
                for (const auto& r : run) s.clds.push_back(r.clds);
                out.push_back(std::move(s));
                ++diag.series_runs;
                run_start = i;
            }
        }
    }
    return out;
}

std::vector<std::int64_t> slice_windows(const LoanSeries& series, std::int64_t stride) {
    if (stride < 1) throw ConfigError("window stride must be >= 1");
    std::vector<std::int64_t> starts;
    const std::int64_t L = series.months();
    for (std::int64_t s = 0; s + kWindowMonths <= L; s += stride) starts.push_back(s);
    return starts;
}

std::vector<WindowSample> label_and_filter(const LoanSeries& series, const std::vector<std::int64_t>& starts,
                                           PipelineDiagnostics& diag) {
    const std::int64_t F = series.features.extent(1);
    std::vector<WindowSample> out;
    for (std::int64_t s : starts) {
        ++diag.candidates;
        bool drop_unavailable = false;
        bool drop_nonzero = false;
        for (std::int64_t i = 0; i < kInputMonths; ++i) {
            const auto& c = series.clds[static_cast<std::size_t>(s + i)];
            if (!c) drop_unavailable = true;
            else if (*c != 0) drop_nonzero = true;
        }
        if (drop_nonzero) {
            ++diag.removed_nonzero_clds;
            continue;
        }
        if (drop_unavailable) {
            ++diag.removed_unavailable_clds;
            continue;
        }
        int label = 0;
        for (std::int64_t i = kInputMonths + kBlankMonths; i < kWindowMonths; ++i) {
            const auto& c = series.clds[static_cast<std::size_t>(s + i)];
            if (c && *c >= kDefaultClds) label = 1;
        }
        WindowSample w;
        w.loan_id = series.loan_id;
        Period p = series.start;
        for (std::int64_t i = 0; i < s; ++i) p = p.next();
        w.start_period = p;
        w.inputs = NumArray::zeros({kInputMonths, F});
        std::copy(series.features.data() + s * F, series.features.data() + (s + kInputMonths) * F, w.inputs.data());
        w.label = label;
        out.push_back(std::move(w));
        ++diag.kept;
        diag.positives += label;
    }
    return out;
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>>
split_train_test(std::vector<WindowSample> samples, double ratio, std::uint64_t seed) {
    if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("train ratio must be in (0,1)");
    std::map<std::string, bool> loan_has_default;
    for (const auto& s : samples) loan_has_default[s.loan_id] |= s.label == 1;
    if (loan_has_default.size() < 2) {
        throw ContractError("split requires at least 2 distinct loans, got " +
                            std::to_string(loan_has_default.size()));
    }

    Rng rng(hash_mix(seed, "split"));
    std::set<std::string> train_loans;
    for (int stratum = 0; stratum < 2; ++stratum) {
        std::vector<std::string> loans;
        for (const auto& [id, has_def] : loan_has_default) {
            if (static_cast<int>(has_def) == stratum) loans.push_back(id);
        }
        rng.shuffle(loans);
        const std::size_t take = static_cast<std::size_t>(
            std::llround(ratio * static_cast<double>(loans.size())));
        for (std::size_t i = 0; i < take; ++i) train_loans.insert(loans[i]);
    }

    std::vector<WindowSample> train, test;
    for (auto& s : samples) {
        if (train_loans.count(s.loan_id)) train.push_back(std::move(s));
        else test.push_back(std::move(s));
    }
    return {std::move(train), std::move(test)};
}

std::vector<WindowSample> undersample(std::vector<WindowSample> train, std::uint64_t seed) {
    std::int64_t pos = 0, neg = 0;
    for (const auto& s : train) (s.label == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) {
        throw ContractError("undersample requires both classes present (positives=" + std::to_string(pos) +
                            ", negatives=" + std::to_string(neg) + ")");
    }
    if (pos == neg) return train;

    const int majority_label = pos > neg ? 1 : 0;
    const std::int64_t keep_majority = std::min(pos, neg);
    std::vector<std::size_t> majority_idx;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].label == majority_label) majority_idx.push_back(i);
    }
    Rng rng(hash_mix(seed, "undersample"));
    rng.shuffle(majority_idx);
    std::set<std::size_t> kept(majority_idx.begin(), majority_idx.begin() + keep_majority);

    std::vector<WindowSample> out;
    out.reserve(static_cast<std::size_t>(2 * keep_majority));
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].label != majority_label || kept.count(i)) out.push_back(std::move(train[i]));
    }
    return out;
}

ScalingStats fit_scaling(std::span<const WindowSample> train, const ColumnLayout& layout,
                         PipelineDiagnostics* diag) {
    ScalingStats st;
    st.numeric_count = static_cast<std::int64_t>(layout.numeric_features.size());
    st.mean.assign(static_cast<std::size_t>(st.numeric_count), 0.0);
    st.stddev.assign(static_cast<std::size_t>(st.numeric_count), 1.0);
    if (train.empty()) return st;

    const std::int64_t rows_per_sample = kInputMonths;
    const double n = static_cast<double>(train.size() * static_cast<std::size_t>(rows_per_sample));
    for (std::int64_t c = 0; c < st.numeric_count; ++c) {
        double sum = 0.0;
        for (const auto& s : train) {
            for (std::int64_t m = 0; m < rows_per_sample; ++m) sum += s.inputs.at(m, c);
        }
        const double mu = sum / n;
        double var = 0.0;
        for (const auto& s : train) {
            for (std::int64_t m = 0; m < rows_per_sample; ++m) {
                const double d = s.inputs.at(m, c) - mu;
                var += d * d;
            }
        }
        var /= n;
        st.mean[static_cast<std::size_t>(c)] = mu;
        if (var > 0.0) {
            st.stddev[static_cast<std::size_t>(c)] = std::sqrt(var);
        } else {
            st.stddev[static_cast<std::size_t>(c)] = 1.0; // zero-variance fallback
            if (diag) ++diag->zero_variance_features;
        }
    }
    return st;
}

void apply_scaling(std::vector<WindowSample>& samples, const ScalingStats& stats) {
    for (auto& s : samples) {
        for (std::int64_t m = 0; m < kInputMonths; ++m) {
            for (std::int64_t c = 0; c < stats.numeric_count; ++c) {
                s.inputs.at(m, c) = (s.inputs.at(m, c) - stats.mean[static_cast<std::size_t>(c)]) /
                                    stats.stddev[static_cast<std::size_t>(c)];
            }
        }
    }
}

void unapply_scaling(std::vector<WindowSample>& samples, const ScalingStats& stats) {
    for (auto& s : samples) {
        for (std::int64_t m = 0; m < kInputMonths; ++m) {
            for (std::int64_t c = 0; c < stats.numeric_count; ++c) {
                s.inputs.at(m, c) = s.inputs.at(m, c) * stats.stddev[static_cast<std::size_t>(c)] +
                                    stats.mean[static_cast<std::size_t>(c)];
            }
        }
    }
}

CohortSummary cohort_summary(const std::vector<MonthlyRecord>& records) {
    std::map<std::string, std::pair<std::int64_t, bool>> loans; // length, defaulted
    for (const auto& r : records) {
        auto& [len, def] = loans[r.loan_id];
        ++len;
        if (r.clds && *r.clds >= kDefaultClds) def = true;
    }
    CohortSummary s;
    s.loan_count = static_cast<std::int64_t>(loans.size());
    if (s.loan_count == 0) return s;
    std::vector<std::int64_t> lengths;
    std::int64_t defaulted = 0;
    double total = 0.0;
    for (const auto& [id, ld] : loans) {
        lengths.push_back(ld.first);
        total += static_cast<double>(ld.first);
        defaulted += ld.second ? 1 : 0;
    }
    std::sort(lengths.begin(), lengths.end());
    s.mean_length = total / static_cast<double>(s.loan_count);
    const std::size_t n = lengths.size();
    s.median_length = (n % 2 == 1) ? static_cast<double>(lengths[n / 2])
                                   : (static_cast<double>(lengths[n / 2 - 1] + lengths[n / 2]) / 2.0);
    s.default_rate = static_cast<double>(defaulted) / static_cast<double>(s.loan_count);
    return s;
}

CohortDataset build_dataset(std::vector<MonthlyRecord> records, const ColumnLayout& layout,
                            const DatasetBuildOptions& opts, PipelineDiagnostics& diag) {
    auto series = build_series(std::move(records), layout, diag);
    std::vector<WindowSample> samples;
    for (const auto& s : series) {
        auto got = label_and_filter(s, slice_windows(s, opts.stride), diag);
        for (auto& w : got) samples.push_back(std::move(w));
    }
    auto [train, test] = split_train_test(std::move(samples), opts.train_ratio, opts.seed);

    CohortDataset ds;
    ds.cohort_id = opts.cohort_id;
    ds.feature_width = layout.feature_width();
    ds.train = std::move(train);
    ds.test = opts.balanced_test ? undersample(std::move(test), hash_mix(opts.seed, "balanced_test"))
                                 : std::move(test);
    if (opts.standardize) {
        ds.stats = fit_scaling(ds.train, layout, &diag);
        apply_scaling(ds.train, ds.stats);
        apply_scaling(ds.test, ds.stats);
    } else {
        ds.stats.numeric_count = static_cast<std::int64_t>(layout.numeric_features.size());
        ds.stats.mean.assign(static_cast<std::size_t>(ds.stats.numeric_count), 0.0);
        ds.stats.stddev.assign(static_cast<std::size_t>(ds.stats.numeric_count), 1.0);
    }
    return ds;
}

namespace {

void pack_samples(ParameterSet& store, const std::string& prefix, const std::vector<WindowSample>& samples,
                  std::int64_t feature_width) {
    if (samples.empty()) return;
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    NumArray inputs = NumArray::zeros({n, kInputMonths, feature_width});
    NumArray labels = NumArray::zeros({n});
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        std::copy(s.inputs.data(), s.inputs.data() + s.inputs.size(),
                  inputs.data() + i * kInputMonths * feature_width);
        labels[i] = s.label;
    }
    store.add(prefix + ".inputs", std::move(inputs));
    store.add(prefix + ".labels", std::move(labels));
}

std::vector<WindowSample> unpack_samples(const ParameterSet& store, const std::string& prefix,
                                         const nlohmann::json& ids) {
    std::vector<WindowSample> out;
    if (!store.contains(prefix + ".inputs")) return out;
    const NumArray& inputs = store.at(prefix + ".inputs");
    const NumArray& labels = store.at(prefix + ".labels");
    const std::int64_t n = inputs.extent(0);
    const std::int64_t F = inputs.extent(2);
    for (std::int64_t i = 0; i < n; ++i) {
        WindowSample s;
        s.loan_id = ids.at(static_cast<std::size_t>(i)).at("loan").get<std::string>();
        s.start_period = Period::parse(ids.at(static_cast<std::size_t>(i)).at("start").get<std::string>());
        s.inputs = NumArray::zeros({kInputMonths, F});
        std::copy(inputs.data() + i * kInputMonths * F, inputs.data() + (i + 1) * kInputMonths * F,
                  s.inputs.data());
        s.label = static_cast<int>(labels[i]);
        out.push_back(std::move(s));
    }
    return out;
}

nlohmann::json ids_json(const std::vector<WindowSample>& samples) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : samples) a.push_back({{"loan", s.loan_id}, {"start", s.start_period.str()}});
    return a;
}

} // namespace

void save_dataset(const std::string& dir, const CohortDataset& dataset, const ColumnLayout& layout,
                  const DatasetBuildOptions& opts, const PipelineDiagnostics& diag) {
    std::filesystem::create_directories(dir);
    ParameterSet store;
    pack_samples(store, "train", dataset.train, dataset.feature_width);
    pack_samples(store, "test", dataset.test, dataset.feature_width);
    save_checkpoint(dir + "/samples.bin", store);

    nlohmann::json j;
    j["cohort_id"] = dataset.cohort_id;
    j["feature_width"] = dataset.feature_width;
    j["feature_names"] = layout.feature_names();
    j["layout"] = nlohmann::json::parse(layout.to_json());
    j["stride"] = opts.stride;
    j["train_ratio"] = opts.train_ratio;
    j["seed"] = opts.seed;
    j["standardize"] = opts.standardize;
    j["balanced_test"] = opts.balanced_test;
    j["counts"] = {{"train", dataset.train.size()},
                   {"test", dataset.test.size()},
                   {"train_positives", std::count_if(dataset.train.begin(), dataset.train.end(),
                                                     [](const WindowSample& s) { return s.label == 1; })},
                   {"test_positives", std::count_if(dataset.test.begin(), dataset.test.end(),
                                                    [](const WindowSample& s) { return s.label == 1; })}};
    j["scaling"] = {{"numeric_count", dataset.stats.numeric_count},
                    {"mean", dataset.stats.mean},
                    {"stddev", dataset.stats.stddev}};
    j["diagnostics"] = {{"loans", diag.loans},
                        {"series_runs", diag.series_runs},
                        {"contiguity_gaps", diag.contiguity_gaps},
                        {"duplicate_periods", diag.duplicate_periods},
                        {"unknown_categories", diag.unknown_categories},
                        {"candidates", diag.candidates},
                        {"removed_nonzero_clds", diag.removed_nonzero_clds},
                        {"removed_unavailable_clds", diag.removed_unavailable_clds},
                        {"kept", diag.kept},
                        {"positives", diag.positives},
                        {"zero_variance_features", diag.zero_variance_features}};
    j["train_ids"] = ids_json(dataset.train);
    j["test_ids"] = ids_json(dataset.test);
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw ContractError("cannot write dataset manifest in '" + dir + "'");
    os << j.dump(2) << "\n";
}

CohortDataset load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw ContractError("missing dataset manifest in '" + dir + "'");
    nlohmann::json j = nlohmann::json::parse(is);
    ParameterSet store = load_checkpoint(dir + "/samples.bin");

    CohortDataset ds;
    ds.cohort_id = j.at("cohort_id").get<std::string>();
    ds.feature_width = j.at("feature_width").get<std::int64_t>();
    ds.train = unpack_samples(store, "train", j.at("train_ids"));
    ds.test = unpack_samples(store, "test", j.at("test_ids"));
    ds.stats.numeric_count = j.at("scaling").at("numeric_count").get<std::int64_t>();
    ds.stats.mean = j.at("scaling").at("mean").get<std::vector<double>>();
    ds.stats.stddev = j.at("scaling").at("stddev").get<std::vector<double>>();
    return ds;
}

} // namespace reseb
