#include "reseb/synth.hpp"

#include <algorithm>
#include <cmath>

#include "reseb/pipeline.hpp"
#include "reseb/rng.hpp"

namespace reseb {

namespace {

constexpr std::int64_t kPrecursorMonths = 8;

std::string loan_name(std::int64_t i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "SYN%07lld", static_cast<long long>(i));
    return buf;
}

} // namespace

std::vector<MonthlyRecord> generate(const SynthConfig& config) {
    if (config.loans < 1) throw ConfigError("synth: loan count must be >= 1");
    if (config.default_rate <= 0.0 || config.default_rate >= 1.0) {
        throw ConfigError("synth: default rate must be strictly inside (0,1)");
    }
    if (config.signal < 0.0 || config.signal > 1.0) throw ConfigError("synth: signal must be in [0,1]");
    if (config.short_fraction < 0.0 || config.short_fraction > 1.0) {
        throw ConfigError("synth: short fraction must be in [0,1]");
    }
    if (config.max_months < 21) throw ConfigError("synth: max months must be >= 21");

    const double s = config.signal;
    std::vector<MonthlyRecord> out;
    out.reserve(static_cast<std::size_t>(config.loans * (config.max_months + config.min_months) / 2));

    for (std::int64_t li = 0; li < config.loans; ++li) {
        // independent substream per loan: loan order never shifts the draws
        Rng rng(hash_mix(config.seed, static_cast<std::uint64_t>(li) + 0x5151ULL));
        const std::string id = loan_name(li);
        const bool defaults = rng.bernoulli(config.default_rate);

        std::int64_t months;
        if (!defaults && rng.bernoulli(config.short_fraction)) {
            months = 12 + static_cast<std::int64_t>(rng.uniform_int(7)); // 12..18, below one window
        } else {
            const std::int64_t lo = std::max<std::int64_t>(config.min_months, 19);
            months = lo + static_cast<std::int64_t>(rng.uniform_int(
                              static_cast<std::uint64_t>(config.max_months - lo + 1)));
        }
        std::int64_t ramp_start = -1; // 0-based month where CLDS first becomes 1
        if (defaults) {
            months = std::max<std::int64_t>(months, 21);
            // 1-based ramp month in [15, L-2] keeps the full 1,2,3 ramp inside
            // the history and at least one leak-free labeled window
            const std::int64_t lo = 15, hi = months - 2;
            ramp_start = lo - 1 + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
        }

        Period period{2012 + static_cast<int>(rng.uniform_int(4)), 1 + static_cast<int>(rng.uniform_int(12))};
        const double rate = rng.uniform(2.5, 7.0);
        double upb = rng.uniform(80e3, 500e3);
        const double base_decline = upb * rng.uniform(0.003, 0.008);
        double eltv = rng.uniform(45.0, 95.0);
        const bool has_deferred = rng.bernoulli(0.08);
        const double deferred = has_deferred ? rng.uniform(1e3, 15e3) : 0.0;

        // rare categorical stretches
        std::int64_t disaster_from = -1, disaster_len = 0;
        if (rng.bernoulli(0.03)) {
            disaster_from = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(months)));
            disaster_len = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
        }
        std::int64_t assist_from = -1, assist_len = 0;
        const char* assist_codes[3] = {"F", "R", "T"};
        const char* assist_code = assist_codes[rng.uniform_int(3)];
        if (rng.bernoulli(0.04)) {
            assist_from = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(months)));
            assist_len = 2 + static_cast<std::int64_t>(rng.uniform_int(4));
        }

        for (std::int64_t t = 0; t < months; ++t) {
            MonthlyRecord r;
            r.loan_id = id;
            r.period = period;
            period = period.next();

            double decline = base_decline * (1.0 + rng.normal(0.0, 0.10));
            double eltv_step = -0.15 + rng.normal(0.0, 0.8);
            int clds = 0;
            if (defaults) {
                if (t >= ramp_start) {
                    clds = static_cast<int>(std::min<std::int64_t>(t - ramp_start + 1, 99));
                    decline = 0.0;                       // payments stopped
                    eltv_step = 0.6 + rng.normal(0.0, 0.8);
                } else if (t >= ramp_start - kPrecursorMonths) {
                    // distress precursors, scaled by the planted signal
                    const double u = static_cast<double>(t - (ramp_start - kPrecursorMonths) + 1) /
                                     static_cast<double>(kPrecursorMonths);
                    decline *= (1.0 - s * u);
                    eltv_step += s * 1.2 * u;
                }
            }
            upb = std::max(upb - decline, 5e3);
            eltv = std::min(std::max(eltv + eltv_step, 5.0), 180.0);

            r.clds = clds;
            r.current_actual_upb = upb;
            r.current_deferred_upb = deferred;
            r.interest_bearing_upb = std::max(upb - deferred, 0.0);
            r.current_ir = rate;
            r.eltv = rng.bernoulli(0.08) ? std::nullopt : std::optional<double>(eltv);
            r.modification_flag = has_deferred ? (rng.bernoulli(0.02) ? "P" : "Y") : "N";
            if (disaster_from >= 0 && t >= disaster_from && t < disaster_from + disaster_len) {
                r.delinquency_due_to_disaster = "Y";
            }
            if (assist_from >= 0 && t >= assist_from && t < assist_from + assist_len) {
                r.borrower_assistance_status_code = assist_code;
            }
            r.current_month_modification_cost = has_deferred ? rng.uniform(5.0, 50.0) : 0.0;
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace reseb
