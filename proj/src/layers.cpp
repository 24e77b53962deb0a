#include "reseb/layers.hpp"

#include <cmath>

namespace reseb {

NumArray glorot(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    NumArray out = NumArray::zeros(std::move(shape));
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = rng.uniform(-a, a);
    return out;
}

void init_attention(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t heads, std::int64_t d_k, Rng& rng) {
    if (heads < 1 || d_k < 1) throw ConfigError("attention requires h >= 1 and d_k >= 1");
    for (std::int64_t i = 0; i < heads; ++i) {
        const std::string n = std::to_string(i);
        p.add(prefix + "wq" + n, glorot({f, d_k}, f, d_k, rng));
        p.add(prefix + "wk" + n, glorot({f, d_k}, f, d_k, rng));
        p.add(prefix + "wv" + n, glorot({f, d_k}, f, d_k, rng));
    }
    p.add(prefix + "wo", glorot({heads * d_k, f}, heads * d_k, f, rng));
}

void init_norm(ParameterSet& p, const std::string& prefix, std::int64_t f) {
    p.add(prefix + "gamma", NumArray::full({f}, 1.0));
    p.add(prefix + "beta", NumArray::zeros({f}));
}

void init_ffn(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t inner, Rng& rng) {
    p.add(prefix + "w1", glorot({f, inner}, f, inner, rng));
    p.add(prefix + "b1", NumArray::zeros({inner}));
    p.add(prefix + "w2", glorot({inner, f}, inner, f, rng));
    p.add(prefix + "b2", NumArray::zeros({f}));
}

void init_lstm(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t h, Rng& rng) {
    for (const char* g : {"wf", "wi", "wc", "wo"}) {
        p.add(prefix + g, glorot({h, f + h}, f + h, h, rng));
    }
    for (const char* g : {"bf", "bi", "bc", "bo"}) {
        p.add(prefix + g, NumArray::zeros({h}));
    }
}

void init_gru(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t h, Rng& rng) {
    for (const char* g : {"wz", "wr", "wh"}) {
        p.add(prefix + g, glorot({h, f + h}, f + h, h, rng));
    }
    for (const char* g : {"bz", "br", "bh"}) {
        p.add(prefix + g, NumArray::zeros({h}));
    }
}

void init_rnn(ParameterSet& p, const std::string& prefix, std::int64_t f, std::int64_t h, Rng& rng) {
    p.add(prefix + "w", glorot({h, f + h}, f + h, h, rng));
    p.add(prefix + "b", NumArray::zeros({h}));
}

void init_head(ParameterSet& p, const std::string& prefix, std::int64_t in, std::int64_t d_head, Rng& rng) {
    p.add(prefix + "w1", glorot({in, d_head}, in, d_head, rng));
    p.add(prefix + "b1", NumArray::zeros({d_head}));
    p.add(prefix + "w2", glorot({d_head, 1}, d_head, 1, rng));
    p.add(prefix + "b2", NumArray::zeros({1}));
}

void init_conv(ParameterSet& p, const std::string& prefix, std::int64_t k, std::int64_t f, std::int64_t c, Rng& rng) {
    p.add(prefix + "w", glorot({k, f, c}, k * f, c, rng));
    p.add(prefix + "b", NumArray::zeros({c}));
}

AttentionNodes bind_attention(Tape& t, const ParameterSet& p, const std::string& prefix, std::int64_t heads) {
    if (heads < 1) throw ConfigError("attention head count must be >= 1");
    AttentionNodes a;
    for (std::int64_t i = 0; i < heads; ++i) {
        const std::string n = std::to_string(i);
        a.wq.push_back(t.param(prefix + "wq" + n, p.at(prefix + "wq" + n)));
        a.wk.push_back(t.param(prefix + "wk" + n, p.at(prefix + "wk" + n)));
        a.wv.push_back(t.param(prefix + "wv" + n, p.at(prefix + "wv" + n)));
    }
    a.wo = t.param(prefix + "wo", p.at(prefix + "wo"));
    a.d_k = p.at(prefix + "wq0").extent(1);
    if (a.d_k < 1) throw ConfigError("attention key width must be >= 1");
    return a;
}

NormNodes bind_norm(Tape& t, const ParameterSet& p, const std::string& prefix) {
    return {t.param(prefix + "gamma", p.at(prefix + "gamma")), t.param(prefix + "beta", p.at(prefix + "beta"))};
}

FfnNodes bind_ffn(Tape& t, const ParameterSet& p, const std::string& prefix) {
    return {t.param(prefix + "w1", p.at(prefix + "w1")), t.param(prefix + "b1", p.at(prefix + "b1")),
            t.param(prefix + "w2", p.at(prefix + "w2")), t.param(prefix + "b2", p.at(prefix + "b2"))};
}

LstmNodes bind_lstm(Tape& t, const ParameterSet& p, const std::string& prefix) {
    LstmNodes n;
    n.wf = t.param(prefix + "wf", p.at(prefix + "wf"));
    n.wi = t.param(prefix + "wi", p.at(prefix + "wi"));
    n.wc = t.param(prefix + "wc", p.at(prefix + "wc"));
    n.wo = t.param(prefix + "wo", p.at(prefix + "wo"));
    n.bf = t.param(prefix + "bf", p.at(prefix + "bf"));
    n.bi = t.param(prefix + "bi", p.at(prefix + "bi"));
    n.bc = t.param(prefix + "bc", p.at(prefix + "bc"));
    n.bo = t.param(prefix + "bo", p.at(prefix + "bo"));
    n.hidden = p.at(prefix + "wf").extent(0);
    return n;
}

GruNodes bind_gru(Tape& t, const ParameterSet& p, const std::string& prefix) {
    GruNodes n;
    n.wz = t.param(prefix + "wz", p.at(prefix + "wz"));
    n.wr = t.param(prefix + "wr", p.at(prefix + "wr"));
    n.wh = t.param(prefix + "wh", p.at(prefix + "wh"));
    n.bz = t.param(prefix + "bz", p.at(prefix + "bz"));
    n.br = t.param(prefix + "br", p.at(prefix + "br"));
    n.bh = t.param(prefix + "bh", p.at(prefix + "bh"));
    n.hidden = p.at(prefix + "wz").extent(0);
    return n;
}

RnnNodes bind_rnn(Tape& t, const ParameterSet& p, const std::string& prefix) {
    RnnNodes n;
    n.w = t.param(prefix + "w", p.at(prefix + "w"));
    n.b = t.param(prefix + "b", p.at(prefix + "b"));
    n.hidden = p.at(prefix + "w").extent(0);
    return n;
}

HeadNodes bind_head(Tape& t, const ParameterSet& p, const std::string& prefix) {
    return {t.param(prefix + "w1", p.at(prefix + "w1")), t.param(prefix + "b1", p.at(prefix + "b1")),
            t.param(prefix + "w2", p.at(prefix + "w2")), t.param(prefix + "b2", p.at(prefix + "b2"))};
}

ConvNodes bind_conv(Tape& t, const ParameterSet& p, const std::string& prefix) {
    return {t.param(prefix + "w", p.at(prefix + "w")), t.param(prefix + "b", p.at(prefix + "b"))};
}

NodeId multi_head_attention(Tape& t, NodeId x, const AttentionNodes& a) {
    if (a.wq.empty() || a.d_k < 1) throw ConfigError("attention requires h >= 1 and d_k >= 1");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(a.d_k));
    std::vector<NodeId> heads;
    heads.reserve(a.wq.size());
    for (std::size_t i = 0; i < a.wq.size(); ++i) {
        NodeId q = t.batched_matmul(x, a.wq[i]); // B x T x d_k
        NodeId k = t.batched_matmul(x, a.wk[i]);
        NodeId v = t.batched_matmul(x, a.wv[i]);
        NodeId scores = t.affine(t.batched_matmul_nt(q, k), inv_sqrt_dk, 0.0); // B x T x T
        NodeId attn = t.softmax_rows(scores);
        heads.push_back(t.batched_matmul(attn, v)); // B x T x d_k
    }
    NodeId z = heads.size() == 1 ? heads[0] : t.concat_last(heads);
    return t.batched_matmul(z, a.wo); // B x T x F
}

NodeId residual_norm(Tape& t, NodeId sub_output, NodeId sub_input, const NormNodes& n) {
    return t.layer_norm(t.add(sub_output, sub_input), n.gamma, n.beta, kLayerNormEps);
}

NodeId feed_forward(Tape& t, NodeId x, const FfnNodes& f) {
    const Shape orig = t.value(x).shape();
    const bool batched = orig.size() == 3;
    const std::int64_t feat = orig.back();
    NodeId flat = x;
    if (batched) flat = t.reshape(x, {orig[0] * orig[1], feat});
    NodeId h = t.relu(t.add_rowvec(t.matmul(flat, f.w1), f.b1));
    NodeId out = t.add_rowvec(t.matmul(h, f.w2), f.b2);
    if (batched) out = t.reshape(out, orig);
    return out;
}

LstmState lstm_cell_step(Tape& t, NodeId x_t, LstmState prev, const LstmNodes& p) {
    std::vector<NodeId> pieces{x_t, prev.h};
    NodeId cat = t.concat_last(pieces);
    NodeId f = t.sigmoid(t.linear(cat, p.wf, p.bf));
    NodeId i = t.sigmoid(t.linear(cat, p.wi, p.bi));
    NodeId c_tilde = t.tanh(t.linear(cat, p.wc, p.bc));
    NodeId o = t.sigmoid(t.linear(cat, p.wo, p.bo));
    NodeId c = t.add(t.mul(f, prev.c), t.mul(i, c_tilde));
    NodeId h = t.mul(o, t.tanh(c));
    return {h, c};
}

NodeId gru_step(Tape& t, NodeId x_t, NodeId h_prev, const GruNodes& p) {
    std::vector<NodeId> pieces{x_t, h_prev};
    NodeId cat = t.concat_last(pieces);
    NodeId z = t.sigmoid(t.linear(cat, p.wz, p.bz));
    NodeId r = t.sigmoid(t.linear(cat, p.wr, p.br));
    std::vector<NodeId> cand_pieces{x_t, t.mul(r, h_prev)};
    NodeId h_tilde = t.tanh(t.linear(t.concat_last(cand_pieces), p.wh, p.bh));
    // h' = (1-z) . h_prev + z . h_tilde
    NodeId one_minus_z = t.affine(z, -1.0, 1.0);
    return t.add(t.mul(one_minus_z, h_prev), t.mul(z, h_tilde));
}

NodeId rnn_step(Tape& t, NodeId x_t, NodeId h_prev, const RnnNodes& p) {
    std::vector<NodeId> pieces{x_t, h_prev};
    return t.tanh(t.linear(t.concat_last(pieces), p.w, p.b));
}

std::vector<NodeId> lstm_sweep(Tape& t, NodeId x, const LstmNodes& p, bool reversed) {
    const NumArray& xv = t.value(x);
    if (xv.rank() != 3) throw DimensionError("lstm_sweep: expected B x T x F, got " + shape_str(xv.shape()));
    const std::int64_t B = xv.extent(0), T = xv.extent(1);
    if (T < 1) throw DimensionError("lstm_sweep: empty sequence");
    LstmState state{t.constant(NumArray::zeros({B, p.hidden})), t.constant(NumArray::zeros({B, p.hidden}))};
    std::vector<NodeId> hs(static_cast<std::size_t>(T));
    for (std::int64_t step = 0; step < T; ++step) {
        const std::int64_t tt = reversed ? T - 1 - step : step;
        state = lstm_cell_step(t, t.slice_time(x, tt), state, p);
        hs[static_cast<std::size_t>(tt)] = state.h;
    }
    return hs;
}

NodeId bilstm(Tape& t, NodeId x, const LstmNodes& fwd, const LstmNodes& bwd) {
    const NumArray& xv = t.value(x);
    const std::int64_t B = xv.extent(0), T = xv.extent(1);
    auto hf = lstm_sweep(t, x, fwd, false);
    auto hb = lstm_sweep(t, x, bwd, true);
    // [h_f(1), h_b(1), h_f(2), h_b(2), ...] laid out as rows of a T x 2H matrix
    std::vector<NodeId> interleaved;
    interleaved.reserve(2 * static_cast<std::size_t>(T));
    for (std::int64_t tt = 0; tt < T; ++tt) {
        interleaved.push_back(hf[static_cast<std::size_t>(tt)]);
        interleaved.push_back(hb[static_cast<std::size_t>(tt)]);
    }
    NodeId flat = t.concat_last(interleaved); // B x (T*2H)
    return t.reshape(flat, {B, T, fwd.hidden + bwd.hidden});
}

NodeId head_logits(Tape& t, NodeId flat, const HeadNodes& h) {
    NodeId hidden = t.relu(t.add_rowvec(t.matmul(flat, h.w1), h.b1));
    NodeId z = t.add_rowvec(t.matmul(hidden, h.w2), h.b2); // B x 1
    return t.reshape(z, {t.value(z).extent(0)});
}

NodeId head(Tape& t, NodeId flat, const HeadNodes& h) {
    // saturated sigmoids round to 0.0/1.0 in doubles; pin the output to the
    // open interval so downstream probability contracts hold
    return t.clamp(t.sigmoid(head_logits(t, flat, h)), 5e-324, 1.0 - 1.1102230246251565e-16);
}

} // namespace reseb
