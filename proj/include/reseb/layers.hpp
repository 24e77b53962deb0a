#pragma once

#include <string>
#include <vector>

#include "reseb/checkpoint.hpp"
#include "reseb/rng.hpp"
#include "reseb/tape.hpp"

namespace reseb {

// Layer parameters live in a ParameterSet under a prefix; binding registers
// them on a tape and hands back the node ids the layer functions consume.
// All layer functions take batched inputs (leading axis B; B=1 for the
// single-sample entry points used in tests).

struct AttentionNodes {
    std::vector<NodeId> wq, wk, wv; // per head, F x d_k
    NodeId wo;                      // (h*d_k) x F
    std::int64_t d_k = 0;
};

struct NormNodes {
    NodeId gamma, beta;
};

struct FfnNodes {
    NodeId w1, b1, w2, b2; // F x 256, 256, 256 x F, F
};

struct LstmNodes {
    NodeId wf, wi, wc, wo; // H x (F+H)
    NodeId bf, bi, bc, bo; // H
    std::int64_t hidden = 0;
};

struct GruNodes {
    NodeId wz, wr, wh;
    NodeId bz, br, bh;
    std::int64_t hidden = 0;
};

struct RnnNodes {
    NodeId w, b;
    std::int64_t hidden = 0;
};

struct HeadNodes {
    NodeId w1, b1, w2, b2; // in x d_head, d_head, d_head x 1, 1
};

struct ConvNodes {
    NodeId w, b; // K x F x C, C
};

// --- initialization (uniform +-sqrt(6/(fan_in+fan_out)) matrices, zero biases)
NumArray glorot(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);
void init_attention(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t heads, std::int64_t d_k, Rng& rng);
void init_norm(ParameterSet& p, const std::string& prefix, std::int64_t f);
void init_ffn(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t inner, Rng& rng);
void init_lstm(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t h, Rng& rng);
void init_gru(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t h, Rng& rng);
void init_rnn(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t h, Rng& rng);
void init_head(ParameterSet& p, const std::string& prefix, std::int64_t in, std::int64_t d_head, Rng& rng);
void init_conv(ParameterSet& p, const std::string& prefix, std::int64_t k, std::int64_t f, std::int64_t c, Rng& rng);

// --- binding
AttentionNodes bind_attention(Tape& t, const ParameterSet& p, const std::string& prefix, std::int64_t heads);
NormNodes bind_norm(Tape& t, const ParameterSet& p, const std::string& prefix);
FfnNodes bind_ffn(Tape& t, const ParameterSet& p, const std::string& prefix);
LstmNodes bind_lstm(Tape& t, const ParameterSet& p, const std::string& prefix);
GruNodes bind_gru(Tape& t, const ParameterSet& p, const std::string& prefix);
RnnNodes bind_rnn(Tape& t, const ParameterSet& p, const std::string& prefix);
HeadNodes bind_head(Tape& t, const ParameterSet& p, const std::string& prefix);
ConvNodes bind_conv(Tape& t, const ParameterSet& p, const std::string& prefix);

constexpr double kLayerNormEps = 1e-6;

// x: B x T x F -> B x T x F. Per head softmax((Q K^T)/sqrt(d_k)) V, heads
// concatenated and projected back to F.
NodeId multi_head_attention(Tape& t, NodeId x, const AttentionNodes& a);

// layer_norm(sub_output + sub_input)
NodeId residual_norm(Tape& t, NodeId sub_output, NodeId sub_input, const NormNodes& n);

// relu(x W1 + b1) W2 + b2, each time step independently. x: B x T x F.
NodeId feed_forward(Tape& t, NodeId x, const FfnNodes& f);

// One cell update. x_t: B x F, h/c: B x H.
struct LstmState {
    NodeId h, c;
};
LstmState lstm_cell_step(Tape& t, NodeId x_t, LstmState prev, const LstmNodes& p);
NodeId gru_step(Tape& t, NodeId x_t, NodeId h_prev, const GruNodes& p);
NodeId rnn_step(Tape& t, NodeId x_t, NodeId h_prev, const RnnNodes& p);

// Full sweep over x: B x T x F with zero initial state. Returns the per-step
// hidden nodes in time order t = 1..T (for the reversed sweep the state flows
// from t+1 but the returned list is still indexed by t).
std::vector<NodeId> lstm_sweep(Tape& t, NodeId x, const LstmNodes& p, bool reversed);

// x: B x T x F -> B x T x 2H, row t = [h_f(t), h_b(t)]
NodeId bilstm(Tape& t, NodeId x, const LstmNodes& fwd, const LstmNodes& bwd);

// flat: B x in -> logits B (pre-sigmoid); head() applies the sigmoid
NodeId head_logits(Tape& t, NodeId flat, const HeadNodes& h);
NodeId head(Tape& t, NodeId flat, const HeadNodes& h);

} // namespace reseb
