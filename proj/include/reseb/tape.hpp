#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reseb/array.hpp"
#include "reseb/rng.hpp"

namespace reseb {

using NodeId = std::int32_t;

// Reverse-mode gradient tape. Kernels append nodes in application order;
// backward() replays the tape in exact reverse order, accumulating into
// per-node gradient buffers. Parameters are named leaves; every registered
// parameter gets a gradient (zeros when the loss never touched it).
//
// A tape is confined to one worker. Nodes are append-only and node values
// are never mutated after creation.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId constant(NumArray v);
    NodeId param(const std::string& name, const NumArray& v);

    const NumArray& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]->value; }
    const NumArray& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]->grad; }
    double scalar_value(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // --- kernels -----------------------------------------------------------
    // a [m,k] x b [k,n] -> [m,n]
    NodeId matmul(NodeId a, NodeId b);
    // a [B,m,k] x b [k,n] -> [B,m,n]    (shared right operand)
    // a [B,m,k] x b [B,k,n] -> [B,m,n]
    NodeId batched_matmul(NodeId a, NodeId b);
    // a [B,m,k] x b [B,n,k]^T -> [B,m,n]
    NodeId batched_matmul_nt(NodeId a, NodeId b);
    // x [B,K] * W [H,K]^T + b [H] -> [B,H]
    NodeId linear(NodeId x, NodeId w, NodeId b);
    // broadcast add of a last-axis vector
    NodeId add_rowvec(NodeId x, NodeId v);

    // rows are the last axis; per-row max subtraction for stability
    NodeId softmax_rows(NodeId x);
    // normalization over the last axis, population variance
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps);

    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId tanh(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    // scale*x + shift, elementwise
    NodeId affine(NodeId x, double scale, double shift);

    NodeId concat_last(std::span<const NodeId> xs);
    // x [B,T,F] -> [B,F] at time t
    NodeId slice_time(NodeId x, std::int64_t t);
    NodeId reshape(NodeId x, Shape shape);
    NodeId sum(NodeId x); // -> [1]

    // mean over batch of log(1+e^z) - y*z; gradient (sigmoid(z)-y)/B
    NodeId bce_with_logits(NodeId logits, const NumArray& labels);

    // clip into [lo, hi]; gradient passes only where no clipping happened
    NodeId clamp(NodeId x, double lo, double hi);

    // inverted dropout; identity when rate == 0
    NodeId dropout(NodeId x, double rate, Rng& rng);

    // x [B,T,F], w [K,F,C], bias [C] -> [B,T-K+1,C], valid padding
    NodeId conv1d(NodeId x, NodeId w, NodeId bias);
    // x [B,T,C] -> [B,C], first max wins ties
    NodeId max_over_time(NodeId x);

    // --- reverse pass ------------------------------------------------------
    void backward(NodeId loss);
    // name -> gradient for every registered parameter (zeros if unused)
    std::map<std::string, NumArray> gradients() const;

private:
    struct Node {
        NumArray value;
        NumArray grad; // allocated on first touch during backward
        std::function<void(Tape&, const NumArray&)> pull;
        int param_index = -1;
    };

    NodeId push(NumArray value, std::function<void(Tape&, const NumArray&)> pull, const char* op);
    NumArray& grad_buf(NodeId id);
    void add_grad(NodeId id, const NumArray& g);

    // nodes are heap-boxed so appends never invalidate references handed out
    // by value()/grad(); callers may hold them across kernel calls
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<std::pair<std::string, NodeId>> params_;
    bool ran_backward_ = false;
};

} // namespace reseb
