#include "reseb/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace reseb {

namespace {

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

} // namespace

double Tape::scalar_value(NodeId id) const {
    const NumArray& v = value(id);
    if (v.size() != 1) throw ContractError("expected scalar node, got shape " + shape_str(v.shape()));
    return v[0];
}

NodeId Tape::push(NumArray value, std::function<void(Tape&, const NumArray&)> pull, const char* op) {
    if (!value.all_finite()) {
        throw NumericError(std::string("kernel '") + op + "' produced non-finite values");
    }
    nodes_.push_back(std::make_unique<Node>(Node{std::move(value), NumArray{}, std::move(pull), -1}));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(NumArray v) {
    if (!v.all_finite()) throw NumericError("constant holds non-finite values");
    nodes_.push_back(std::make_unique<Node>(Node{std::move(v), NumArray{}, nullptr, -1}));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::param(const std::string& name, const NumArray& v) {
    NodeId id = constant(v);
    nodes_.back()->param_index = static_cast<int>(params_.size());
    params_.emplace_back(name, id);
    return id;
}

NumArray& Tape::grad_buf(NodeId id) {
    Node& n = *nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = NumArray::zeros(n.value.shape());
    return n.grad;
}

void Tape::add_grad(NodeId id, const NumArray& g) {
    NumArray& buf = grad_buf(id);
    const double* src = g.data();
    double* dst = buf.data();
    const std::int64_t n = buf.size();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const NumArray& av = value(a);
    const NumArray& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
    }
    const std::int64_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
    NumArray out = NumArray::zeros({m, n});
    mm_nn(av.data(), bv.data(), out.data(), m, k, n);
    return push(std::move(out), [a, b, m, k, n](Tape& t, const NumArray& g) {
        mm_nt(g.data(), t.value(b).data(), t.grad_buf(a).data(), m, n, k);
        mm_tn(t.value(a).data(), g.data(), t.grad_buf(b).data(), m, k, n);
    }, "matmul");
}

NodeId Tape::batched_matmul(NodeId a, NodeId b) {
    const NumArray& av = value(a);
    const NumArray& bv = value(b);
    if (av.rank() != 3) throw DimensionError("batched_matmul: left operand must be rank 3, got " + shape_str(av.shape()));
    const std::int64_t B = av.extent(0), m = av.extent(1), k = av.extent(2);
    if (bv.rank() == 2) {
        if (bv.extent(0) != k) {
            throw DimensionError("batched_matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
        }
        const std::int64_t n = bv.extent(1);
        NumArray out = NumArray::zeros({B, m, n});
        for (std::int64_t s = 0; s < B; ++s) {
            mm_nn(av.data() + s * m * k, bv.data(), out.data() + s * m * n, m, k, n);
        }
        return push(std::move(out), [a, b, B, m, k, n](Tape& t, const NumArray& g) {
            double* da = t.grad_buf(a).data();
            double* db = t.grad_buf(b).data();
            const double* pa = t.value(a).data();
            const double* pb = t.value(b).data();
            for (std::int64_t s = 0; s < B; ++s) {
                mm_nt(g.data() + s * m * n, pb, da + s * m * k, m, n, k);
                mm_tn(pa + s * m * k, g.data() + s * m * n, db, m, k, n);
            }
        }, "batched_matmul");
    }
    if (bv.rank() != 3 || bv.extent(0) != B || bv.extent(1) != k) {
        throw DimensionError("batched_matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
    }
    const std::int64_t n = bv.extent(2);
    NumArray out = NumArray::zeros({B, m, n});
    for (std::int64_t s = 0; s < B; ++s) {
        mm_nn(av.data() + s * m * k, bv.data() + s * k * n, out.data() + s * m * n, m, k, n);
    }
    return push(std::move(out), [a, b, B, m, k, n](Tape& t, const NumArray& g) {
        double* da = t.grad_buf(a).data();
        double* db = t.grad_buf(b).data();
        const double* pa = t.value(a).data();
        const double* pb = t.value(b).data();
        for (std::int64_t s = 0; s < B; ++s) {
            mm_nt(g.data() + s * m * n, pb + s * k * n, da + s * m * k, m, n, k);
            mm_tn(pa + s * m * k, g.data() + s * m * n, db + s * k * n, m, k, n);
        }
    }, "batched_matmul");
}

NodeId Tape::batched_matmul_nt(NodeId a, NodeId b) {
    const NumArray& av = value(a);
    const NumArray& bv = value(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.extent(0) != bv.extent(0) || av.extent(2) != bv.extent(2)) {
        throw DimensionError("batched_matmul_nt: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
    }
    const std::int64_t B = av.extent(0), m = av.extent(1), k = av.extent(2), n = bv.extent(1);
    NumArray out = NumArray::zeros({B, m, n});
    for (std::int64_t s = 0; s < B; ++s) {
        mm_nt(av.data() + s * m * k, bv.data() + s * n * k, out.data() + s * m * n, m, k, n);
    }
    return push(std::move(out), [a, b, B, m, k, n](Tape& t, const NumArray& g) {
        double* da = t.grad_buf(a).data();
        double* db = t.grad_buf(b).data();
        const double* pa = t.value(a).data();
        const double* pb = t.value(b).data();
        for (std::int64_t s = 0; s < B; ++s) {
            // dA = G * B ; dB = G^T * A
            mm_nn(g.data() + s * m * n, pb + s * n * k, da + s * m * k, m, n, k);
            mm_tn(g.data() + s * m * n, pa + s * m * k, db + s * n * k, m, n, k);
        }
    }, "batched_matmul_nt");
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
    const NumArray& xv = value(x);
    const NumArray& wv = value(w);
    const NumArray& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || xv.extent(1) != wv.extent(1)) {
        throw DimensionError("linear: incompatible shapes " + shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
    }
    const std::int64_t B = xv.extent(0), K = xv.extent(1), H = wv.extent(0);
    if (bv.rank() != 1 || bv.extent(0) != H) {
        throw DimensionError("linear: bias shape " + shape_str(bv.shape()) + " does not match " + std::to_string(H));
    }
    NumArray out = NumArray::zeros({B, H});
    mm_nt(xv.data(), wv.data(), out.data(), B, K, H);
    for (std::int64_t i = 0; i < B; ++i) {
        double* row = out.data() + i * H;
        for (std::int64_t j = 0; j < H; ++j) row[j] += bv[j];
    }
    return push(std::move(out), [x, w, b, B, K, H](Tape& t, const NumArray& g) {
        mm_nn(g.data(), t.value(w).data(), t.grad_buf(x).data(), B, H, K);
        mm_tn(g.data(), t.value(x).data(), t.grad_buf(w).data(), B, H, K);
        double* db = t.grad_buf(b).data();
        for (std::int64_t i = 0; i < B; ++i) {
            const double* row = g.data() + i * H;
            for (std::int64_t j = 0; j < H; ++j) db[j] += row[j];
        }
    }, "linear");
}

NodeId Tape::add_rowvec(NodeId x, NodeId v) {
    const NumArray& xv = value(x);
    const NumArray& vv = value(v);
    const std::int64_t n = xv.extent(xv.rank() - 1);
    if (vv.rank() != 1 || vv.extent(0) != n) {
        throw DimensionError("add_rowvec: vector " + shape_str(vv.shape()) + " does not match last axis of " + shape_str(xv.shape()));
    }
    NumArray out = xv;
    const std::int64_t rows = out.size() / n;
    for (std::int64_t r = 0; r < rows; ++r) {
        double* row = out.data() + r * n;
        for (std::int64_t j = 0; j < n; ++j) row[j] += vv[j];
    }
    return push(std::move(out), [x, v, rows, n](Tape& t, const NumArray& g) {
        t.add_grad(x, g);
        double* dv = t.grad_buf(v).data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = g.data() + r * n;
            for (std::int64_t j = 0; j < n; ++j) dv[j] += row[j];
        }
    }, "add_rowvec");
}

NodeId Tape::softmax_rows(NodeId x) {
    const NumArray& xv = value(x);
    const std::int64_t n = xv.extent(xv.rank() - 1);
    const std::int64_t rows = xv.size() / n;
    NumArray out = NumArray::zeros(xv.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * n;
        double* o = out.data() + r * n;
        double mx = in[0];
        for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        const double inv = 1.0 / z;
        for (std::int64_t j = 0; j < n; ++j) o[j] *= inv;
    }
    NodeId self = push(std::move(out), nullptr, "softmax_rows");
    nodes_.back()->pull = [x, self, rows, n](Tape& t, const NumArray& g) {
        const double* y = t.value(self).data();
        double* dx = t.grad_buf(x).data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* yr = y + r * n;
            const double* gr = g.data() + r * n;
            double dot = 0.0;
            for (std::int64_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
            double* dr = dx + r * n;
            for (std::int64_t j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
    };
    return self;
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const NumArray& xv = value(x);
    const NumArray& gv = value(gamma);
    const NumArray& bv = value(beta);
    const std::int64_t f = xv.extent(xv.rank() - 1);
    if (gv.rank() != 1 || gv.extent(0) != f || bv.rank() != 1 || bv.extent(0) != f) {
        throw DimensionError("layer_norm: gamma/beta must have length " + std::to_string(f));
    }
    const std::int64_t rows = xv.size() / f;
    NumArray out = NumArray::zeros(xv.shape());
    NumArray xhat = NumArray::zeros(xv.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * f;
        double mu = 0.0;
        for (std::int64_t j = 0; j < f; ++j) mu += in[j];
        mu /= static_cast<double>(f);
        double var = 0.0;
        for (std::int64_t j = 0; j < f; ++j) {
            const double d = in[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(f);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        double* xh = xhat.data() + r * f;
        double* o = out.data() + r * f;
        for (std::int64_t j = 0; j < f; ++j) {
            xh[j] = (in[j] - mu) * is;
            o[j] = xh[j] * gv[j] + bv[j];
        }
    }
    return push(std::move(out),
                [x, gamma, beta, rows, f, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const NumArray& g) {
        const double* gam = t.value(gamma).data();
        double* dx = t.grad_buf(x).data();
        double* dgam = t.grad_buf(gamma).data();
        double* dbet = t.grad_buf(beta).data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * f;
            const double* xh = xhat.data() + r * f;
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::int64_t j = 0; j < f; ++j) {
                dbet[j] += gr[j];
                dgam[j] += gr[j] * xh[j];
                const double dxh = gr[j] * gam[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= static_cast<double>(f);
            mean_dxh_xh /= static_cast<double>(f);
            const double is = inv_std[static_cast<std::size_t>(r)];
            double* dr = dx + r * f;
            for (std::int64_t j = 0; j < f; ++j) {
                const double dxh = gr[j] * gam[j];
                dr[j] += is * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
    }, "layer_norm");
}

NodeId Tape::relu(NodeId x) {
    NumArray out = value(x);
    for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [x](Tape& t, const NumArray& g) {
        const NumArray& xv = t.value(x);
        double* dx = t.grad_buf(x).data();
        for (std::int64_t i = 0; i < g.size(); ++i) {
            if (xv[i] > 0.0) dx[i] += g[i];
        }
    }, "relu");
}

NodeId Tape::sigmoid(NodeId x) {
    NumArray out = value(x);
    for (auto& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
    NodeId self = push(std::move(out), nullptr, "sigmoid");
    nodes_.back()->pull = [x, self](Tape& t, const NumArray& g) {
        const NumArray& y = t.value(self);
        double* dx = t.grad_buf(x).data();
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    return self;
}

NodeId Tape::tanh(NodeId x) {
    NumArray out = value(x);
    for (auto& v : out.vec()) v = std::tanh(v);
    NodeId self = push(std::move(out), nullptr, "tanh");
    nodes_.back()->pull = [x, self](Tape& t, const NumArray& g) {
        const NumArray& y = t.value(self);
        double* dx = t.grad_buf(x).data();
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return self;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const NumArray& av = value(a);
    const NumArray& bv = value(b);
    if (!av.same_shape(bv)) {
        throw DimensionError("add: shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    NumArray out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(std::move(out), [a, b](Tape& t, const NumArray& g) {
        t.add_grad(a, g);
        t.add_grad(b, g);
    }, "add");
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const NumArray& av = value(a);
    const NumArray& bv = value(b);
    if (!av.same_shape(bv)) {
        throw DimensionError("sub: shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    NumArray out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return push(std::move(out), [a, b](Tape& t, const NumArray& g) {
        t.add_grad(a, g);
        double* db = t.grad_buf(b).data();
        for (std::int64_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }, "sub");
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const NumArray& av = value(a);
    const NumArray& bv = value(b);
    if (!av.same_shape(bv)) {
        throw DimensionError("mul: shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    NumArray out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return push(std::move(out), [a, b](Tape& t, const NumArray& g) {
        const NumArray& avv = t.value(a);
        const NumArray& bvv = t.value(b);
        double* da = t.grad_buf(a).data();
        double* db = t.grad_buf(b).data();
        for (std::int64_t i = 0; i < g.size(); ++i) {
            da[i] += g[i] * bvv[i];
            db[i] += g[i] * avv[i];
        }
    }, "mul");
}

NodeId Tape::affine(NodeId x, double scale, double shift) {
    NumArray out = value(x);
    for (auto& v : out.vec()) v = scale * v + shift;
    return push(std::move(out), [x, scale](Tape& t, const NumArray& g) {
        double* dx = t.grad_buf(x).data();
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += scale * g[i];
    }, "affine");
}

NodeId Tape::concat_last(std::span<const NodeId> xs) {
    if (xs.empty()) throw DimensionError("concat_last: no operands");
    const NumArray& first = value(xs[0]);
    const Shape lead = drop_last(first.shape());
    std::int64_t total = 0;
    std::vector<std::int64_t> widths;
    widths.reserve(xs.size());
    for (NodeId id : xs) {
        const NumArray& v = value(id);
        if (drop_last(v.shape()) != lead) {
            throw DimensionError("concat_last: leading dims differ, " + shape_str(first.shape()) + " vs " + shape_str(v.shape()));
        }
        widths.push_back(v.extent(v.rank() - 1));
        total += widths.back();
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    const std::int64_t rows = shape_size(lead.empty() ? Shape{1} : lead);
    NumArray out = NumArray::zeros(out_shape);
    std::int64_t off = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const NumArray& v = value(xs[i]);
        const std::int64_t w = widths[i];
        for (std::int64_t r = 0; r < rows; ++r) {
            std::memcpy(out.data() + r * total + off, v.data() + r * w, static_cast<std::size_t>(w) * sizeof(double));
        }
        off += w;
    }
    std::vector<NodeId> ids(xs.begin(), xs.end());
    return push(std::move(out), [ids = std::move(ids), widths = std::move(widths), rows, total](Tape& t, const NumArray& g) {
        std::int64_t off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::int64_t w = widths[i];
            double* dst = t.grad_buf(ids[i]).data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* src = g.data() + r * total + off;
                double* drow = dst + r * w;
                for (std::int64_t j = 0; j < w; ++j) drow[j] += src[j];
            }
            off += w;
        }
    }, "concat_last");
}

NodeId Tape::slice_time(NodeId x, std::int64_t t0) {
    const NumArray& xv = value(x);
    if (xv.rank() != 3) throw DimensionError("slice_time: expected rank 3, got " + shape_str(xv.shape()));
    const std::int64_t B = xv.extent(0), T = xv.extent(1), F = xv.extent(2);
    if (t0 < 0 || t0 >= T) throw DimensionError("slice_time: index " + std::to_string(t0) + " out of range [0," + std::to_string(T) + ")");
    NumArray out = NumArray::zeros({B, F});
    for (std::int64_t b = 0; b < B; ++b) {
        std::memcpy(out.data() + b * F, xv.data() + (b * T + t0) * F, static_cast<std::size_t>(F) * sizeof(double));
    }
    return push(std::move(out), [x, t0, B, T, F](Tape& t, const NumArray& g) {
        double* dx = t.grad_buf(x).data();
        for (std::int64_t b = 0; b < B; ++b) {
            double* dst = dx + (b * T + t0) * F;
            const double* src = g.data() + b * F;
            for (std::int64_t j = 0; j < F; ++j) dst[j] += src[j];
        }
    }, "slice_time");
}

NodeId Tape::reshape(NodeId x, Shape shape) {
    const NumArray& xv = value(x);
    if (shape_size(shape) != xv.size()) {
        throw DimensionError("reshape: size mismatch " + shape_str(xv.shape()) + " -> " + shape_str(shape));
    }
    NumArray out(std::move(shape), xv.vec());
    return push(std::move(out), [x](Tape& t, const NumArray& g) {
        NumArray& dst = t.grad_buf(x);
        double* d = dst.data();
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }, "reshape");
}

NodeId Tape::sum(NodeId x) {
    const NumArray& xv = value(x);
    double s = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i) s += xv[i];
    return push(NumArray::scalar(s), [x](Tape& t, const NumArray& g) {
        double* dx = t.grad_buf(x).data();
        const double gv = g[0];
        for (std::int64_t i = 0; i < t.value(x).size(); ++i) dx[i] += gv;
    }, "sum");
}

NodeId Tape::bce_with_logits(NodeId logits, const NumArray& labels) {
    const NumArray& zv = value(logits);
    if (zv.rank() != 1 || !zv.same_shape(labels)) {
        throw DimensionError("bce_with_logits: logits " + shape_str(zv.shape()) + " vs labels " + shape_str(labels.shape()));
    }
    const std::int64_t B = zv.size();
    double loss = 0.0;
    for (std::int64_t i = 0; i < B; ++i) {
        const double z = zv[i];
        // log(1+e^z) - y z, computed stably
        loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - labels[i] * z;
    }
    loss /= static_cast<double>(B);
    NumArray y = labels;
    return push(NumArray::scalar(loss), [logits, y = std::move(y), B](Tape& t, const NumArray& g) {
        const NumArray& zv = t.value(logits);
        double* dz = t.grad_buf(logits).data();
        const double gv = g[0] / static_cast<double>(B);
        for (std::int64_t i = 0; i < B; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-zv[i]));
            dz[i] += gv * (p - y[i]);
        }
    }, "bce_with_logits");
}

NodeId Tape::clamp(NodeId x, double lo, double hi) {
    const NumArray& xv = value(x);
    NumArray out = xv;
    for (auto& v : out.vec()) v = std::min(std::max(v, lo), hi);
    return push(std::move(out), [x, lo, hi](Tape& t, const NumArray& g) {
        const NumArray& xv = t.value(x);
        double* dx = t.grad_buf(x).data();
        for (std::int64_t i = 0; i < g.size(); ++i) {
            if (xv[i] > lo && xv[i] < hi) dx[i] += g[i];
        }
    }, "clamp");
}

NodeId Tape::dropout(NodeId x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const NumArray& xv = value(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    NumArray mask = NumArray::zeros(xv.shape());
    NumArray out = NumArray::zeros(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) {
        const double m = rng.uniform() < rate ? 0.0 : keep_scale;
        mask[i] = m;
        out[i] = xv[i] * m;
    }
    return push(std::move(out), [x, mask = std::move(mask)](Tape& t, const NumArray& g) {
        double* dx = t.grad_buf(x).data();
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
    }, "dropout");
}

NodeId Tape::conv1d(NodeId x, NodeId w, NodeId bias) {
    const NumArray& xv = value(x);
    const NumArray& wv = value(w);
    const NumArray& bv = value(bias);
    if (xv.rank() != 3 || wv.rank() != 3 || xv.extent(2) != wv.extent(1)) {
        throw DimensionError("conv1d: incompatible shapes " + shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
    }
    const std::int64_t B = xv.extent(0), T = xv.extent(1), F = xv.extent(2);
    const std::int64_t K = wv.extent(0), C = wv.extent(2);
    if (K > T) throw ConfigError("conv1d: kernel length " + std::to_string(K) + " exceeds sequence length " + std::to_string(T));
    if (bv.rank() != 1 || bv.extent(0) != C) throw DimensionError("conv1d: bias must have length " + std::to_string(C));
    const std::int64_t To = T - K + 1;
    NumArray out = NumArray::zeros({B, To, C});
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t t0 = 0; t0 < To; ++t0) {
            double* orow = out.data() + (b * To + t0) * C;
            for (std::int64_t c = 0; c < C; ++c) orow[c] = bv[c];
            for (std::int64_t k = 0; k < K; ++k) {
                const double* xrow = xv.data() + (b * T + t0 + k) * F;
                const double* wrow = wv.data() + k * F * C;
                for (std::int64_t f = 0; f < F; ++f) {
                    const double xval = xrow[f];
                    if (xval == 0.0) continue;
                    const double* wf = wrow + f * C;
                    for (std::int64_t c = 0; c < C; ++c) orow[c] += xval * wf[c];
                }
            }
        }
    }
    return push(std::move(out), [x, w, bias, B, T, F, K, C, To](Tape& t, const NumArray& g) {
        const NumArray& xv = t.value(x);
        const NumArray& wv = t.value(w);
        double* dx = t.grad_buf(x).data();
        double* dw = t.grad_buf(w).data();
        double* db = t.grad_buf(bias).data();
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t t0 = 0; t0 < To; ++t0) {
                const double* grow = g.data() + (b * To + t0) * C;
                for (std::int64_t c = 0; c < C; ++c) db[c] += grow[c];
                for (std::int64_t k = 0; k < K; ++k) {
                    const double* xrow = xv.data() + (b * T + t0 + k) * F;
                    double* dxrow = dx + (b * T + t0 + k) * F;
                    for (std::int64_t f = 0; f < F; ++f) {
                        const double* wf = wv.data() + (k * F + f) * C;
                        double* dwf = dw + (k * F + f) * C;
                        double acc = 0.0;
                        for (std::int64_t c = 0; c < C; ++c) {
                            acc += grow[c] * wf[c];
                            dwf[c] += grow[c] * xrow[f];
                        }
                        dxrow[f] += acc;
                    }
                }
            }
        }
    }, "conv1d");
}

NodeId Tape::max_over_time(NodeId x) {
    const NumArray& xv = value(x);
    if (xv.rank() != 3) throw DimensionError("max_over_time: expected rank 3, got " + shape_str(xv.shape()));
    const std::int64_t B = xv.extent(0), T = xv.extent(1), C = xv.extent(2);
    NumArray out = NumArray::zeros({B, C});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(B * C), 0);
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            double best = xv.at(b, 0, c);
            std::int64_t bi = 0;
            for (std::int64_t t0 = 1; t0 < T; ++t0) {
                const double v = xv.at(b, t0, c);
                if (v > best) { best = v; bi = t0; }
            }
            out.at(b, c) = best;
            argmax[static_cast<std::size_t>(b * C + c)] = bi;
        }
    }
    return push(std::move(out), [x, argmax = std::move(argmax), B, T, C](Tape& t, const NumArray& g) {
        double* dx = t.grad_buf(x).data();
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t c = 0; c < C; ++c) {
                const std::int64_t bi = argmax[static_cast<std::size_t>(b * C + c)];
                dx[(b * T + bi) * C + c] += g[b * C + c];
            }
        }
    }, "max_over_time");
}

void Tape::backward(NodeId loss) {
    if (ran_backward_) throw ContractError("backward already ran on this tape");
    const NumArray& lv = value(loss);
    if (lv.size() != 1) throw ContractError("backward requires a scalar loss, got shape " + shape_str(lv.shape()));
    ran_backward_ = true;
    grad_buf(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = *nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty() || !n.pull) continue;
        n.pull(*this, n.grad);
    }
}

std::map<std::string, NumArray> Tape::gradients() const {
    std::map<std::string, NumArray> out;
    for (const auto& [name, id] : params_) {
        const Node& n = *nodes_[static_cast<std::size_t>(id)];
        out[name] = n.grad.empty() ? NumArray::zeros(n.value.shape()) : n.grad;
    }
    return out;
}

} // namespace reseb
