#pragma once

// Test-only reference implementations written as explicit scalar loops,
// independent of the tape kernels they are used to check.

#include <cmath>
#include <vector>

#include "reseb/checkpoint.hpp"
#include "reseb/model.hpp"

namespace oracle {

using reseb::NumArray;
using reseb::ParameterSet;

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// a [m,k] * b [k,n]
inline NumArray mm(const NumArray& a, const NumArray& b) {
    const auto m = a.extent(0), k = a.extent(1), n = b.extent(1);
    NumArray out = NumArray::zeros({m, n});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            out.at(i, j) = acc;
        }
    return out;
}

inline NumArray layer_norm(const NumArray& x, const NumArray& gamma, const NumArray& beta, double eps) {
    const auto rows = x.extent(0), f = x.extent(1);
    NumArray out = NumArray::zeros({rows, f});
    for (std::int64_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::int64_t j = 0; j < f; ++j) mu += x.at(r, j);
        mu /= static_cast<double>(f);
        double var = 0.0;
        for (std::int64_t j = 0; j < f; ++j) var += (x.at(r, j) - mu) * (x.at(r, j) - mu);
        var /= static_cast<double>(f);
        for (std::int64_t j = 0; j < f; ++j) {
            out.at(r, j) = (x.at(r, j) - mu) / std::sqrt(var + eps) * gamma[j] + beta[j];
        }
    }
    return out;
}

// multi-head self-attention with per-head loops; also asserts row-stochastic
// attention weights when check_rows is non-null
inline NumArray attention(const NumArray& x, const ParameterSet& p, const std::string& prefix,
                          std::int64_t heads, std::vector<double>* row_sums = nullptr) {
    const auto T = x.extent(0);
    const auto d_k = p.at(prefix + "wq0").extent(1);
    std::vector<NumArray> zs;
    for (std::int64_t hI = 0; hI < heads; ++hI) {
        const std::string n = std::to_string(hI);
        NumArray q = mm(x, p.at(prefix + "wq" + n));
        NumArray k = mm(x, p.at(prefix + "wk" + n));
        NumArray v = mm(x, p.at(prefix + "wv" + n));
        NumArray attn = NumArray::zeros({T, T});
        for (std::int64_t i = 0; i < T; ++i) {
            double mx = -1e300;
            std::vector<double> logits(static_cast<std::size_t>(T));
            for (std::int64_t j = 0; j < T; ++j) {
                double acc = 0.0;
                for (std::int64_t c = 0; c < d_k; ++c) acc += q.at(i, c) * k.at(j, c);
                logits[static_cast<std::size_t>(j)] = acc / std::sqrt(static_cast<double>(d_k));
                mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
            }
            double z = 0.0;
            for (std::int64_t j = 0; j < T; ++j) z += std::exp(logits[static_cast<std::size_t>(j)] - mx);
            double row_sum = 0.0;
            for (std::int64_t j = 0; j < T; ++j) {
                attn.at(i, j) = std::exp(logits[static_cast<std::size_t>(j)] - mx) / z;
                row_sum += attn.at(i, j);
            }
            if (row_sums) row_sums->push_back(row_sum);
        }
        zs.push_back(mm(attn, v));
    }
    NumArray z = NumArray::zeros({T, heads * d_k});
    for (std::int64_t hI = 0; hI < heads; ++hI)
        for (std::int64_t i = 0; i < T; ++i)
            for (std::int64_t c = 0; c < d_k; ++c) z.at(i, hI * d_k + c) = zs[static_cast<std::size_t>(hI)].at(i, c);
    return mm(z, p.at(prefix + "wo"));
}

inline NumArray feed_forward(const NumArray& x, const ParameterSet& p, const std::string& prefix) {
    const auto T = x.extent(0), f = x.extent(1);
    const NumArray& w1 = p.at(prefix + "w1");
    const NumArray& b1 = p.at(prefix + "b1");
    const NumArray& w2 = p.at(prefix + "w2");
    const NumArray& b2 = p.at(prefix + "b2");
    const auto inner = w1.extent(1);
    NumArray out = NumArray::zeros({T, f});
    for (std::int64_t t = 0; t < T; ++t) {
        std::vector<double> h(static_cast<std::size_t>(inner));
        for (std::int64_t j = 0; j < inner; ++j) {
            double acc = b1[j];
            for (std::int64_t c = 0; c < f; ++c) acc += x.at(t, c) * w1.at(c, j);
            h[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
        }
        for (std::int64_t j = 0; j < f; ++j) {
            double acc = b2[j];
            for (std::int64_t c = 0; c < inner; ++c) acc += h[static_cast<std::size_t>(c)] * w2.at(c, j);
            out.at(t, j) = acc;
        }
    }
    return out;
}

struct LstmWeights {
    const NumArray *wf, *wi, *wc, *wo, *bf, *bi, *bc, *bo;
};

inline LstmWeights lstm_weights(const ParameterSet& p, const std::string& prefix) {
    return {&p.at(prefix + "wf"), &p.at(prefix + "wi"), &p.at(prefix + "wc"), &p.at(prefix + "wo"),
            &p.at(prefix + "bf"), &p.at(prefix + "bi"), &p.at(prefix + "bc"), &p.at(prefix + "bo")};
}

inline void lstm_step(const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c,
                      const LstmWeights& w) {
    const auto H = w.wf->extent(0);
    const auto K = w.wf->extent(1);
    std::vector<double> cat(x);
    cat.insert(cat.end(), h.begin(), h.end());
    std::vector<double> hn(static_cast<std::size_t>(H)), cn(static_cast<std::size_t>(H));
    for (std::int64_t j = 0; j < H; ++j) {
        double zf = (*w.bf)[j], zi = (*w.bi)[j], zc = (*w.bc)[j], zo = (*w.bo)[j];
        for (std::int64_t p2 = 0; p2 < K; ++p2) {
            zf += w.wf->at(j, p2) * cat[static_cast<std::size_t>(p2)];
            zi += w.wi->at(j, p2) * cat[static_cast<std::size_t>(p2)];
            zc += w.wc->at(j, p2) * cat[static_cast<std::size_t>(p2)];
            zo += w.wo->at(j, p2) * cat[static_cast<std::size_t>(p2)];
        }
        const double f = sig(zf), i = sig(zi), ct = std::tanh(zc), o = sig(zo);
        cn[static_cast<std::size_t>(j)] = f * c[static_cast<std::size_t>(j)] + i * ct;
        hn[static_cast<std::size_t>(j)] = o * std::tanh(cn[static_cast<std::size_t>(j)]);
    }
    h = hn;
    c = cn;
}

inline std::vector<double> row_of(const NumArray& x, std::int64_t t) {
    std::vector<double> out(static_cast<std::size_t>(x.extent(1)));
    for (std::int64_t j = 0; j < x.extent(1); ++j) out[static_cast<std::size_t>(j)] = x.at(t, j);
    return out;
}

// x: T x F -> T x 2H, forward then reversed sweep
inline NumArray bilstm(const NumArray& x, const ParameterSet& p, const std::string& fwd_prefix,
                       const std::string& bwd_prefix) {
    const auto T = x.extent(0);
    const auto wf = lstm_weights(p, fwd_prefix);
    const auto wb = lstm_weights(p, bwd_prefix);
    const auto H = wf.wf->extent(0);
    NumArray out = NumArray::zeros({T, 2 * H});
    std::vector<double> h(static_cast<std::size_t>(H), 0.0), c(static_cast<std::size_t>(H), 0.0);
    for (std::int64_t t = 0; t < T; ++t) {
        lstm_step(row_of(x, t), h, c, wf);
        for (std::int64_t j = 0; j < H; ++j) out.at(t, j) = h[static_cast<std::size_t>(j)];
    }
    h.assign(static_cast<std::size_t>(H), 0.0);
    c.assign(static_cast<std::size_t>(H), 0.0);
    for (std::int64_t t = T - 1; t >= 0; --t) {
        lstm_step(row_of(x, t), h, c, wb);
        for (std::int64_t j = 0; j < H; ++j) out.at(t, H + j) = h[static_cast<std::size_t>(j)];
    }
    return out;
}

inline double head(const std::vector<double>& flat, const ParameterSet& p, const std::string& prefix) {
    const NumArray& w1 = p.at(prefix + "w1");
    const NumArray& b1 = p.at(prefix + "b1");
    const NumArray& w2 = p.at(prefix + "w2");
    const NumArray& b2 = p.at(prefix + "b2");
    const auto d = w1.extent(1);
    std::vector<double> h(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j) {
        double acc = b1[j];
        for (std::size_t c = 0; c < flat.size(); ++c) acc += flat[c] * w1.at(static_cast<std::int64_t>(c), j);
        h[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
    }
    double z = b2[0];
    for (std::int64_t c = 0; c < d; ++c) z += h[static_cast<std::size_t>(c)] * w2.at(c, 0);
    return sig(z);
}

// Single-sample rese_bilstm forward composed from the layer oracles above.
inline double rese_bilstm_forward(const NumArray& x, const reseb::Model& model) {
    const auto& spec = model.spec;
    const auto& p = model.params;
    NumArray attn = attention(x, p, "attn.", spec.heads);
    NumArray sum1 = NumArray::zeros(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) sum1[i] = attn[i] + x[i];
    NumArray norm1 = layer_norm(sum1, p.at("ln1.gamma"), p.at("ln1.beta"), 1e-6);
    NumArray ff = feed_forward(norm1, p, "ffn.");
    NumArray sum2 = NumArray::zeros(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) sum2[i] = ff[i] + norm1[i];
    NumArray norm2 = layer_norm(sum2, p.at("ln2.gamma"), p.at("ln2.beta"), 1e-6);
    NumArray hidden = bilstm(norm2, p, "lstm_f.", "lstm_b.");
    std::vector<double> flat(hidden.vec());
    return head(flat, p, "head.");
}

} // namespace oracle
