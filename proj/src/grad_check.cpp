#include "reseb/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "reseb/rng.hpp"

namespace reseb {

GradCheckReport grad_check(const ForwardFn& fn, ParameterSet params, double eps,
                           int coords_per_param, std::uint64_t seed) {
    std::map<std::string, NumArray> analytic;
    {
        Tape tape;
        NodeId loss = fn(tape, params);
        tape.backward(loss);
        analytic = tape.gradients();
    }

    auto eval = [&]() {
        Tape tape;
        return tape.scalar_value(fn(tape, params));
    };

    GradCheckReport report;
    Rng rng(seed);
    for (auto& [name, arr] : params.items()) {
        auto it = analytic.find(name);
        if (it == analytic.end()) continue;
        const NumArray& g_an = it->second;
        const std::int64_t n = arr.size();
        const std::int64_t samples = std::min<std::int64_t>(n, coords_per_param);

        // distinct coordinates; full sweep when the array is small
        std::vector<std::int64_t> coords;
        if (samples == n) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            std::vector<std::int64_t> all(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
            rng.shuffle(all);
            coords.assign(all.begin(), all.begin() + samples);
        }

        double worst = 0.0;
        for (std::int64_t c : coords) {
            const double saved = arr[c];
            arr[c] = saved + eps;
            const double up = eval();
            arr[c] = saved - eps;
            const double down = eval();
            arr[c] = saved;
            const double g_fd = (up - down) / (2.0 * eps);
            const double ga = g_an[c];
            const double rel = std::abs(ga - g_fd) / std::max(1e-8, std::abs(ga) + std::abs(g_fd));
            worst = std::max(worst, rel);
        }
        report.max_rel_err[name] = worst;
        report.worst = std::max(report.worst, worst);
    }
    return report;
}

} // namespace reseb
