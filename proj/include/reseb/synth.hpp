#pragma once

#include <cstdint>
#include <vector>

#include "reseb/records.hpp"

namespace reseb {

// Deterministic synthetic loan-performance generator. Defaulting loans ramp
// CLDS 1 -> 2 -> 3 and, scaled by `signal`, show precursors in the months
// before the ramp: principal paydown flattens toward zero and ELTV drifts
// upward. At signal = 0 the precursor months follow the exact same process
// as non-defaulting loans.
struct SynthConfig {
    std::int64_t loans = 5000;
    std::int64_t min_months = 19; // lower bound for the long-loan branch
    std::int64_t max_months = 40;
    double short_fraction = 0.10; // fraction of loans shorter than one window
    double default_rate = 0.05;  // loan-level
    double signal = 0.8;         // s in [0,1]
    std::uint64_t seed = 7;
};

std::vector<MonthlyRecord> generate(const SynthConfig& config);

} // namespace reseb
