#include "reseb/shapley.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "reseb/rng.hpp"

namespace reseb {

ExactShapley exact_shapley(const PredictFn& f, std::span<const double> x, std::span<const double> background,
                           std::span<const std::size_t> active) {
    if (x.size() != background.size()) {
        throw DimensionError("exact_shapley: x and background lengths differ");
    }
    const std::size_t n = active.size();
    if (n == 0) throw ContractError("exact_shapley: no active columns");
    if (n > 12) {
        throw ContractError("exact_shapley: " + std::to_string(n) +
                            " active columns exceeds the enumeration limit of 12; use sampled_shapley");
    }
    for (std::size_t c : active) {
        if (c >= x.size()) throw ContractError("exact_shapley: active column out of range");
    }

    const std::size_t n_masks = std::size_t{1} << n;
    std::vector<double> value(n_masks);
    std::vector<double> probe(background.begin(), background.end());
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        for (std::size_t i = 0; i < n; ++i) {
            probe[active[i]] = (mask >> i) & 1 ? x[active[i]] : background[active[i]];
        }
        value[mask] = f(probe);
    }

    std::vector<double> fact(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    ExactShapley out;
    out.base = value[0];
    out.values.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            const std::size_t s = static_cast<std::size_t>(std::popcount(mask));
            const double w = fact[s] * fact[n - s - 1] / fact[n];
            out.values[i] += w * (value[mask | bit] - value[mask]);
        }
    }
    return out;
}

SampledShapley sampled_shapley(const BatchPredictFn& f, std::span<const double> x,
                               std::span<const double> background, int n_permutations, std::uint64_t seed) {
    if (x.size() != background.size()) {
        throw DimensionError("sampled_shapley: x and background lengths differ");
    }
    if (n_permutations < 1) throw ContractError("sampled_shapley: need at least one permutation");
    const std::size_t n = x.size();

    SampledShapley out;
    out.n_permutations = n_permutations;
    out.values.assign(n, 0.0);
    out.std_error.assign(n, 0.0);
    std::vector<double> m2(n, 0.0); // Welford second moments

    Rng rng(hash_mix(seed, "shapley"));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    {
        std::vector<std::vector<double>> base_batch{std::vector<double>(background.begin(), background.end())};
        out.base = f(base_batch)[0];
    }

    for (int it = 1; it <= n_permutations; ++it) {
        rng.shuffle(perm);
        // walk from the background to x, evaluating after each column flip
        std::vector<std::vector<double>> states;
        states.reserve(n);
        std::vector<double> cur(background.begin(), background.end());
        for (std::size_t k = 0; k < n; ++k) {
            cur[perm[k]] = x[perm[k]];
            states.push_back(cur);
        }
        std::vector<double> preds = f(states);
        double prev = out.base;
        for (std::size_t k = 0; k < n; ++k) {
            const double contrib = preds[k] - prev;
            prev = preds[k];
            const std::size_t col = perm[k];
            const double delta = contrib - out.values[col];
            out.values[col] += delta / static_cast<double>(it);
            m2[col] += delta * (contrib - out.values[col]);
        }
    }
    if (n_permutations > 1) {
        for (std::size_t c = 0; c < n; ++c) {
            const double var = m2[c] / static_cast<double>(n_permutations - 1);
            out.std_error[c] = std::sqrt(std::max(var, 0.0) / static_cast<double>(n_permutations));
        }
    }
    return out;
}

std::vector<double> background_mean(std::span<const WindowSample> train, int count, std::uint64_t seed) {
    if (train.empty()) throw ContractError("background_mean: no training samples");
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(hash_mix(seed, "background"));
    rng.shuffle(idx);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(count), train.size());

    const std::size_t width = static_cast<std::size_t>(train[0].inputs.size());
    std::vector<double> mean(width, 0.0);
    for (std::size_t i = 0; i < take; ++i) {
        const NumArray& m = train[idx[i]].inputs;
        for (std::size_t c = 0; c < width; ++c) mean[c] += m[static_cast<std::int64_t>(c)];
    }
    for (auto& v : mean) v /= static_cast<double>(take);
    return mean;
}

namespace {

BatchPredictFn model_batch_predictor(const Model& model) {
    const std::int64_t T = model.spec.months, F = model.spec.features;
    return [&model, T, F](const std::vector<std::vector<double>>& rows) {
        std::vector<double> preds;
        preds.reserve(rows.size());
        constexpr std::size_t kChunk = 256;
        for (std::size_t at = 0; at < rows.size(); at += kChunk) {
            const std::size_t take = std::min(kChunk, rows.size() - at);
            NumArray x = NumArray::zeros({static_cast<std::int64_t>(take), T, F});
            for (std::size_t b = 0; b < take; ++b) {
                std::copy(rows[at + b].begin(), rows[at + b].end(), x.data() + static_cast<std::int64_t>(b) * T * F);
            }
            NumArray p = forward(model, x);
            for (std::size_t b = 0; b < take; ++b) preds.push_back(p[static_cast<std::int64_t>(b)]);
        }
        return preds;
    };
}

} // namespace

std::vector<SampleAttribution> explain_model(const Model& model, std::span<const WindowSample> samples,
                                             std::span<const double> background, int n_permutations,
                                             std::uint64_t seed, int workers) {
    if (samples.empty()) throw ContractError("explain_model: no samples");
    if (workers < 1) workers = 1;
    auto predict = model_batch_predictor(model);

    std::vector<SampleAttribution> out(samples.size());
    std::mutex next_mutex;
    std::size_t next = 0;
    auto worker_fn = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= samples.size()) return;
                i = next++;
            }
            const WindowSample& s = samples[i];
            std::vector<double> flat(s.inputs.vec());
            SampledShapley sh = sampled_shapley(predict, flat, background, n_permutations,
                                                hash_mix(seed, static_cast<std::uint64_t>(i)));
            SampleAttribution a;
            a.loan_id = s.loan_id;
            a.start_period = s.start_period;
            a.label = s.label;
            a.base = sh.base;
            a.values = std::move(sh.values);
            a.std_error = std::move(sh.std_error);
            a.raw = std::move(flat);
            a.prediction = a.base + std::accumulate(a.values.begin(), a.values.end(), 0.0);
            out[i] = std::move(a);
        }
    };
    if (workers == 1) {
        worker_fn();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
        for (auto& t : pool) t.join();
    }
    return out;
}

ImportanceReport importance_report(const std::vector<SampleAttribution>& attributions,
                                   const std::vector<std::string>& feature_names, int top_k) {
    if (attributions.empty()) throw ContractError("importance_report: no attributions");
    const std::size_t width = attributions[0].values.size();
    const std::size_t f_count = feature_names.size();
    if (width % f_count != 0) throw DimensionError("importance_report: width is not a multiple of feature count");

    ImportanceReport rep;
    rep.top_k = top_k;
    rep.mean_abs.assign(width, 0.0);
    for (const auto& a : attributions) {
        for (std::size_t c = 0; c < width; ++c) rep.mean_abs[c] += std::abs(a.values[c]);
    }
    for (auto& v : rep.mean_abs) v /= static_cast<double>(attributions.size());

    std::vector<std::size_t> order(width);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // ties break to the lower column index
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rep.mean_abs[a] != rep.mean_abs[b]) return rep.mean_abs[a] > rep.mean_abs[b];
        return a < b;
    });
    rep.rank.assign(width, 0);
    for (std::size_t pos = 0; pos < width; ++pos) rep.rank[order[pos]] = static_cast<int>(pos + 1);

    for (const auto& name : feature_names) rep.top_month_counts[name] = 0;
    for (std::size_t c = 0; c < width; ++c) {
        if (rep.rank[c] <= top_k) {
            rep.top_month_counts[feature_names[c % f_count]] += 1;
        }
    }
    return rep;
}

void write_summary_plot_data(const std::string& path, const std::vector<SampleAttribution>& attributions,
                             const std::vector<std::string>& feature_names) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot write summary plot data '" + path + "'");
    os << "sample,loan_id,month,feature,shap_value,feature_value\n";
    os.precision(10);
    const std::size_t f_count = feature_names.size();
    for (std::size_t i = 0; i < attributions.size(); ++i) {
        const auto& a = attributions[i];
        for (std::size_t c = 0; c < a.values.size(); ++c) {
            os << i << "," << a.loan_id << "," << (c / f_count + 1) << "," << feature_names[c % f_count] << ","
               << a.values[c] << "," << a.raw[c] << "\n";
        }
    }
}

void write_attributions(const std::string& path, const std::vector<SampleAttribution>& attributions,
                        const std::vector<std::string>& feature_names) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot write attributions '" + path + "'");
    os << "sample,loan_id,start_period,label,base,prediction,month,feature,shap_value,feature_value,std_error\n";
    os.precision(10);
    const std::size_t f_count = feature_names.size();
    for (std::size_t i = 0; i < attributions.size(); ++i) {
        const auto& a = attributions[i];
        for (std::size_t c = 0; c < a.values.size(); ++c) {
            os << i << "," << a.loan_id << "," << a.start_period.str() << "," << a.label << "," << a.base << ","
               << a.prediction << "," << (c / f_count + 1) << "," << feature_names[c % f_count] << ","
               << a.values[c] << "," << a.raw[c] << "," << a.std_error[c] << "\n";
        }
    }
}

} // namespace reseb
