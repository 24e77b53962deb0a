#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "reseb/checkpoint.hpp"
#include "reseb/tape.hpp"

namespace reseb {

// Builds the computation on a fresh tape from the given parameters and
// returns the scalar loss node. Must be deterministic in the parameters.
using ForwardFn = std::function<NodeId(Tape&, const ParameterSet&)>;

struct GradCheckReport {
    // max relative error over the sampled coordinates, per parameter
    std::map<std::string, double> max_rel_err;
    double worst = 0.0;
};

// Central finite differences against one analytic backward pass.
// Relative error per coordinate: |g_an - g_fd| / max(1e-8, |g_an| + |g_fd|).
GradCheckReport grad_check(const ForwardFn& fn, ParameterSet params, double eps = 1e-5,
                           int coords_per_param = 20, std::uint64_t seed = 1);

} // namespace reseb
