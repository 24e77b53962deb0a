#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "reseb/grad_check.hpp"
#include "reseb/layers.hpp"
#include "reseb/rng.hpp"

using namespace reseb;

namespace {

NumArray random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    NumArray a = NumArray::zeros(std::move(shape));
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

// Single-sample wrappers: lift T x F to 1 x T x F and drop the batch axis.
NumArray run_attention(const NumArray& x, const ParameterSet& p, std::int64_t heads) {
    Tape t;
    NodeId xb = t.reshape(t.constant(x), {1, x.extent(0), x.extent(1)});
    auto nodes = bind_attention(t, p, "attn.", heads);
    NodeId out = multi_head_attention(t, xb, nodes);
    return NumArray({x.extent(0), x.extent(1)}, t.value(out).vec());
}

NumArray run_ffn(const NumArray& x, const ParameterSet& p) {
    Tape t;
    NodeId xb = t.reshape(t.constant(x), {1, x.extent(0), x.extent(1)});
    NodeId out = feed_forward(t, xb, bind_ffn(t, p, "ffn."));
    return NumArray({x.extent(0), x.extent(1)}, t.value(out).vec());
}

NumArray run_bilstm(const NumArray& x, const ParameterSet& p, const std::string& f, const std::string& b) {
    Tape t;
    NodeId xb = t.reshape(t.constant(x), {1, x.extent(0), x.extent(1)});
    NodeId out = bilstm(t, xb, bind_lstm(t, p, f), bind_lstm(t, p, b));
    const NumArray& v = t.value(out);
    return NumArray({v.extent(1), v.extent(2)}, v.vec());
}

} // namespace

TEST_CASE("attention with zero logits is a column mean") {
    // h=1, Wq=Wk=0, Wv=Wo=I: uniform attention rows, so every output row is
    // the column mean of X
    const std::int64_t T = 4, F = 3;
    ParameterSet p;
    p.add("attn.wq0", NumArray::zeros({F, F}));
    p.add("attn.wk0", NumArray::zeros({F, F}));
    NumArray eye = NumArray::zeros({F, F});
    for (std::int64_t i = 0; i < F; ++i) eye.at(i, i) = 1.0;
    p.add("attn.wv0", eye);
    p.add("attn.wo", eye);

    Rng rng(1);
    NumArray x = random_array({T, F}, rng);
    NumArray out = run_attention(x, p, 1);
    for (std::int64_t j = 0; j < F; ++j) {
        double mean = 0.0;
        for (std::int64_t i = 0; i < T; ++i) mean += x.at(i, j);
        mean /= static_cast<double>(T);
        for (std::int64_t i = 0; i < T; ++i) CHECK(out.at(i, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("attention with a single time step ignores the score weights") {
    const std::int64_t F = 5, dk = 3;
    Rng rng(2);
    ParameterSet a, b;
    NumArray wv = random_array({F, dk}, rng);
    NumArray wo = random_array({dk, F}, rng);
    a.add("attn.wq0", random_array({F, dk}, rng));
    a.add("attn.wk0", random_array({F, dk}, rng));
    a.add("attn.wv0", wv);
    a.add("attn.wo", wo);
    b.add("attn.wq0", random_array({F, dk}, rng));
    b.add("attn.wk0", random_array({F, dk}, rng));
    b.add("attn.wv0", wv);
    b.add("attn.wo", wo);

    NumArray x = random_array({1, F}, rng);
    NumArray oa = run_attention(x, a, 1);
    NumArray ob = run_attention(x, b, 1);
    for (std::int64_t i = 0; i < oa.size(); ++i) CHECK(oa[i] == doctest::Approx(ob[i]).epsilon(1e-14));
}

TEST_CASE("attention matches the per-head loop oracle") {
    const std::int64_t T = 3, F = 4, dk = 2, heads = 2;
    Rng rng(3);
    ParameterSet p;
    for (std::int64_t i = 0; i < heads; ++i) {
        p.add("attn.wq" + std::to_string(i), random_array({F, dk}, rng));
        p.add("attn.wk" + std::to_string(i), random_array({F, dk}, rng));
        p.add("attn.wv" + std::to_string(i), random_array({F, dk}, rng));
    }
    p.add("attn.wo", random_array({heads * dk, F}, rng));

    NumArray x = random_array({T, F}, rng);
    std::vector<double> row_sums;
    NumArray expect = oracle::attention(x, p, "attn.", heads, &row_sums);
    NumArray got = run_attention(x, p, heads);
    REQUIRE(got.shape() == x.shape());
    for (std::int64_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - expect[i]) <= 1e-10);
    for (double s : row_sums) CHECK(std::abs(s - 1.0) <= 1e-12); // row-stochastic A_i
}

TEST_CASE("attention shape is preserved across random configurations") {
    Rng rng(17);
    for (int it = 0; it < 10; ++it) {
        const std::int64_t T = 1 + static_cast<std::int64_t>(rng.uniform_int(6));
        const std::int64_t F = 1 + static_cast<std::int64_t>(rng.uniform_int(8));
        const std::int64_t dk = 1 + static_cast<std::int64_t>(rng.uniform_int(5));
        const std::int64_t heads = 1 + static_cast<std::int64_t>(rng.uniform_int(3));
        ParameterSet p;
        Rng r2 = rng.fork(it);
        init_attention(p, "attn.", F, heads, dk, r2);
        NumArray x = random_array({T, F}, rng);
        CHECK(run_attention(x, p, heads).shape() == x.shape());
    }
}

TEST_CASE("residual_norm") {
    const std::int64_t T = 3, F = 4;
    Rng rng(4);
    ParameterSet p;
    init_norm(p, "ln.", F);
    NumArray x = random_array({T, F}, rng);

    auto run = [&](const NumArray& sub_out, const NumArray& sub_in) {
        Tape t;
        auto n = bind_norm(t, p, "ln.");
        NodeId so = t.reshape(t.constant(sub_out), {1, T, F});
        NodeId si = t.reshape(t.constant(sub_in), {1, T, F});
        return NumArray({T, F}, t.value(residual_norm(t, so, si, n)).vec());
    };

    SUBCASE("cancellation gives zeros when beta is zero") {
        NumArray neg = x;
        for (auto& v : neg.vec()) v = -v;
        NumArray out = run(neg, x);
        for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
    }
    SUBCASE("zero sub-layer output reduces to plain layer norm") {
        NumArray out = run(NumArray::zeros({T, F}), x);
        NumArray expect = oracle::layer_norm(x, p.at("ln.gamma"), p.at("ln.beta"), 1e-6);
        for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
    SUBCASE("random pair matches add-then-normalize recomputation") {
        NumArray y = random_array({T, F}, rng);
        NumArray sum = NumArray::zeros({T, F});
        for (std::int64_t i = 0; i < sum.size(); ++i) sum[i] = x[i] + y[i];
        NumArray expect = oracle::layer_norm(sum, p.at("ln.gamma"), p.at("ln.beta"), 1e-6);
        NumArray out = run(y, x);
        for (std::int64_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - expect[i]) <= 1e-12);
    }
}

TEST_CASE("feed_forward") {
    const std::int64_t T = 5, F = 4, inner = 8;
    Rng rng(5);

    SUBCASE("all-zero weights emit the output bias everywhere") {
        ParameterSet p;
        p.add("ffn.w1", NumArray::zeros({F, inner}));
        p.add("ffn.b1", NumArray::zeros({inner}));
        p.add("ffn.w2", NumArray::zeros({inner, F}));
        p.add("ffn.b2", NumArray::full({F}, 2.5));
        NumArray out = run_ffn(random_array({T, F}, rng), p);
        for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 2.5);
    }

    ParameterSet p;
    init_ffn(p, "ffn.", F, inner, rng);
    NumArray x = random_array({T, F}, rng);

    SUBCASE("row permutation commutes (per-step independence)") {
        NumArray base = run_ffn(x, p);
        std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
        NumArray shuffled = NumArray::zeros({T, F});
        for (std::int64_t i = 0; i < T; ++i)
            for (std::int64_t j = 0; j < F; ++j) shuffled.at(i, j) = x.at(perm[static_cast<std::size_t>(i)], j);
        NumArray out = run_ffn(shuffled, p);
        for (std::int64_t i = 0; i < T; ++i)
            for (std::int64_t j = 0; j < F; ++j)
                CHECK(out.at(i, j) == base.at(perm[static_cast<std::size_t>(i)], j));
    }

    SUBCASE("matches the two-loop oracle") {
        NumArray expect = oracle::feed_forward(x, p, "ffn.");
        NumArray out = run_ffn(x, p);
        for (std::int64_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - expect[i]) <= 1e-10);
    }
}

TEST_CASE("lstm cell step") {
    const std::int64_t F = 3, H = 4;

    auto run_step = [&](const ParameterSet& p, const NumArray& x, const NumArray& h0, const NumArray& c0) {
        Tape t;
        auto w = bind_lstm(t, p, "cell.");
        LstmState st{t.constant(NumArray({1, H}, h0.vec())), t.constant(NumArray({1, H}, c0.vec()))};
        st = lstm_cell_step(t, t.constant(NumArray({1, F}, x.vec())), st, w);
        return std::pair<NumArray, NumArray>(NumArray({H}, t.value(st.h).vec()), NumArray({H}, t.value(st.c).vec()));
    };

    SUBCASE("all-zero weights and states") {
        ParameterSet p;
        for (const char* g : {"wf", "wi", "wc", "wo"}) p.add(std::string("cell.") + g, NumArray::zeros({H, F + H}));
        for (const char* g : {"bf", "bi", "bc", "bo"}) p.add(std::string("cell.") + g, NumArray::zeros({H}));
        auto [h, c] = run_step(p, NumArray::zeros({F}), NumArray::zeros({H}), NumArray::zeros({H}));
        for (std::int64_t j = 0; j < H; ++j) {
            CHECK(h[j] == 0.0);
            CHECK(c[j] == 0.0);
        }
        // forget and input gates sit at sigmoid(0)=0.5: with c_prev = v the
        // new cell state is exactly v/2
        NumArray v = NumArray::full({H}, 3.0);
        auto [h2, c2] = run_step(p, NumArray::zeros({F}), NumArray::zeros({H}), v);
        for (std::int64_t j = 0; j < H; ++j) CHECK(c2[j] == doctest::Approx(1.5).epsilon(1e-15));
    }

    SUBCASE("saturated forget gate preserves memory") {
        ParameterSet p;
        for (const char* g : {"wf", "wi", "wc", "wo"}) p.add(std::string("cell.") + g, NumArray::zeros({H, F + H}));
        p.add("cell.bf", NumArray::full({H}, 20.0));
        for (const char* g : {"bi", "bc", "bo"}) p.add(std::string("cell.") + g, NumArray::zeros({H}));
        NumArray v({H}, {0.3, -1.2, 2.0, 0.01});
        auto [h, c] = run_step(p, NumArray::zeros({F}), NumArray::zeros({H}), v);
        for (std::int64_t j = 0; j < H; ++j) CHECK(std::abs(c[j] - v[j]) <= 1e-8 * std::abs(v[j]) + 1e-8);
    }

    SUBCASE("random step matches the scalar-loop oracle") {
        Rng rng(6);
        ParameterSet p;
        init_lstm(p, "cell.", F, H, rng);
        NumArray x = random_array({F}, rng);
        NumArray h0 = random_array({H}, rng);
        NumArray c0 = random_array({H}, rng);
        auto [h, c] = run_step(p, x, h0, c0);

        auto w = oracle::lstm_weights(p, "cell.");
        std::vector<double> ho(h0.vec()), co(c0.vec());
        oracle::lstm_step(x.vec(), ho, co, w);
        for (std::int64_t j = 0; j < H; ++j) {
            CHECK(std::abs(h[j] - ho[static_cast<std::size_t>(j)]) <= 1e-12);
            CHECK(std::abs(c[j] - co[static_cast<std::size_t>(j)]) <= 1e-12);
        }
    }
}

TEST_CASE("bilstm single step symmetry") {
    const std::int64_t F = 3, H = 2;
    Rng rng(7);
    ParameterSet p;
    init_lstm(p, "f.", F, H, rng);
    // identical parameters for the backward direction
    for (const char* g : {"wf", "wi", "wc", "wo", "bf", "bi", "bc", "bo"}) {
        p.add(std::string("b.") + g, p.at(std::string("f.") + g));
    }
    NumArray x = random_array({1, F}, rng);
    NumArray out = run_bilstm(x, p, "f.", "b.");
    for (std::int64_t j = 0; j < H; ++j) CHECK(out.at(0, j) == out.at(0, H + j));
}

TEST_CASE("bilstm time-reversal symmetry") {
    const std::int64_t T = 5, F = 3, H = 4;
    Rng rng(8);
    ParameterSet p;
    init_lstm(p, "f.", F, H, rng);
    init_lstm(p, "b.", F, H, rng);
    NumArray x = random_array({T, F}, rng);
    NumArray rev = NumArray::zeros({T, F});
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t j = 0; j < F; ++j) rev.at(t, j) = x.at(T - 1 - t, j);

    NumArray out = run_bilstm(x, p, "f.", "b.");
    NumArray swapped = run_bilstm(rev, p, "b.", "f.");
    for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t j = 0; j < H; ++j) {
            CHECK(out.at(t, j) == doctest::Approx(swapped.at(T - 1 - t, H + j)).epsilon(1e-14));
            CHECK(out.at(t, H + j) == doctest::Approx(swapped.at(T - 1 - t, j)).epsilon(1e-14));
        }
    }
}

TEST_CASE("bilstm matches the double-loop oracle") {
    const std::int64_t T = 5, F = 3, H = 4;
    Rng rng(9);
    ParameterSet p;
    init_lstm(p, "f.", F, H, rng);
    init_lstm(p, "b.", F, H, rng);
    NumArray x = random_array({T, F}, rng);
    NumArray expect = oracle::bilstm(x, p, "f.", "b.");
    NumArray out = run_bilstm(x, p, "f.", "b.");
    REQUIRE(out.shape() == expect.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - expect[i]) <= 1e-12);
}

TEST_CASE("empty sequences are rejected") {
    CHECK_THROWS_AS(NumArray::zeros({0, 3}), DimensionError);
}

TEST_CASE("rnn step with zero weights gives zero state") {
    const std::int64_t F = 3, H = 4;
    ParameterSet p;
    p.add("rnn.w", NumArray::zeros({H, F + H}));
    p.add("rnn.b", NumArray::zeros({H}));
    Tape t;
    auto cell = bind_rnn(t, p, "rnn.");
    NodeId h = rnn_step(t, t.constant(NumArray::full({1, F}, 0.7)), t.constant(NumArray::zeros({1, H})), cell);
    for (std::int64_t j = 0; j < H; ++j) CHECK(t.value(h)[j] == 0.0);
}

TEST_CASE("conv1d with unit kernel and identity channels passes input through") {
    const std::int64_t T = 6, F = 3;
    Tape t;
    NumArray w = NumArray::zeros({1, F, F});
    for (std::int64_t j = 0; j < F; ++j) w.at(0, j, j) = 1.0;
    Rng rng(10);
    NumArray x = random_array({1 * T * F == 0 ? 1 : 1, T, F}, rng);
    NodeId out = t.conv1d(t.constant(x), t.constant(w), t.constant(NumArray::zeros({F})));
    const NumArray& v = t.value(out);
    REQUIRE(v.shape() == x.shape());
    for (std::int64_t i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("conv1d rejects kernels longer than the sequence") {
    Tape t;
    NodeId x = t.constant(NumArray::zeros({1, 2, 3}));
    NodeId w = t.constant(NumArray::zeros({4, 3, 2}));
    NodeId b = t.constant(NumArray::zeros({2}));
    CHECK_THROWS_AS(t.conv1d(x, w, b), ConfigError);
}

TEST_CASE("gru step matches the loop oracle") {
    const std::int64_t F = 3, H = 4;
    Rng rng(11);
    ParameterSet p;
    init_gru(p, "gru.", F, H, rng);
    NumArray x = random_array({F}, rng);
    NumArray h0 = random_array({H}, rng);

    Tape t;
    auto cell = bind_gru(t, p, "gru.");
    NodeId h = gru_step(t, t.constant(NumArray({1, F}, x.vec())), t.constant(NumArray({1, H}, h0.vec())), cell);
    const NumArray& got = t.value(h);

    // independent scalar evaluation
    const NumArray& wz = p.at("gru.wz");
    const NumArray& wr = p.at("gru.wr");
    const NumArray& wh = p.at("gru.wh");
    for (std::int64_t j = 0; j < H; ++j) {
        double zz = p.at("gru.bz")[j], zr = p.at("gru.br")[j];
        for (std::int64_t c = 0; c < F; ++c) {
            zz += wz.at(j, c) * x[c];
            zr += wr.at(j, c) * x[c];
        }
        for (std::int64_t c = 0; c < H; ++c) {
            zz += wz.at(j, F + c) * h0[c];
            zr += wr.at(j, F + c) * h0[c];
        }
        const double z = oracle::sig(zz), r = oracle::sig(zr);
        double zh = p.at("gru.bh")[j];
        for (std::int64_t c = 0; c < F; ++c) zh += wh.at(j, c) * x[c];
        for (std::int64_t c = 0; c < H; ++c) zh += wh.at(j, F + c) * (h0[c] * oracle::sig([&] {
            double acc = p.at("gru.br")[c];
            for (std::int64_t q = 0; q < F; ++q) acc += wr.at(c, q) * x[q];
            for (std::int64_t q = 0; q < H; ++q) acc += wr.at(c, F + q) * h0[q];
            return acc;
        }()));
        const double ht = std::tanh(zh);
        const double expect = (1.0 - z) * h0[j] + z * ht;
        (void)r;
        CHECK(std::abs(got[j] - expect) <= 1e-12);
    }
}

TEST_CASE("head output") {
    const std::int64_t in = 6, d = 4;
    SUBCASE("all-zero weights give 0.5") {
        ParameterSet p;
        p.add("head.w1", NumArray::zeros({in, d}));
        p.add("head.b1", NumArray::zeros({d}));
        p.add("head.w2", NumArray::zeros({d, 1}));
        p.add("head.b2", NumArray::zeros({1}));
        Tape t;
        auto h = bind_head(t, p, "head.");
        NodeId out = head(t, t.constant(NumArray::full({1, in}, 9.0)), h);
        CHECK(t.value(out)[0] == 0.5);
    }
    SUBCASE("strictly inside (0,1) and matches the loop oracle") {
        Rng rng(12);
        ParameterSet p;
        init_head(p, "head.", in, d, rng);
        for (int it = 0; it < 20; ++it) {
            NumArray x = random_array({1, in}, rng, -50.0, 50.0);
            Tape t;
            auto h = bind_head(t, p, "head.");
            const double got = t.value(head(t, t.constant(x), h))[0];
            CHECK(got > 0.0);
            CHECK(got < 1.0);
            CHECK(std::abs(got - oracle::head(x.vec(), p, "head.")) <= 1e-12);
        }
    }
}

TEST_CASE("every layer passes an isolated gradient check") {
    Rng rng(13);
    const std::int64_t T = 3, F = 4, H = 3, dk = 2, heads = 2, inner = 6;

    SUBCASE("attention") {
        ParameterSet p;
        init_attention(p, "attn.", F, heads, dk, rng);
        NumArray x = random_array({1, T, F}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            auto a = bind_attention(t, ps, "attn.", heads);
            return t.sum(multi_head_attention(t, t.constant(x), a));
        };
        CHECK(grad_check(fn, p, 1e-5, 30, 1).worst <= 1e-5);
    }
    SUBCASE("residual norm") {
        ParameterSet p;
        init_norm(p, "ln.", F);
        p.at("ln.gamma") = random_array({F}, rng, 0.5, 1.5);
        p.at("ln.beta") = random_array({F}, rng);
        p.add("x", random_array({1, T, F}, rng));
        NumArray y = random_array({1, T, F}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            auto n = bind_norm(t, ps, "ln.");
            NodeId x = t.param("x", ps.at("x"));
            return t.sum(residual_norm(t, x, t.constant(y), n));
        };
        CHECK(grad_check(fn, p, 1e-5, 30, 2).worst <= 1e-5);
    }
    SUBCASE("feed forward") {
        ParameterSet p;
        init_ffn(p, "ffn.", F, inner, rng);
        NumArray x = random_array({1, T, F}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            return t.sum(feed_forward(t, t.constant(x), bind_ffn(t, ps, "ffn.")));
        };
        CHECK(grad_check(fn, p, 1e-5, 30, 3).worst <= 1e-5);
    }
    SUBCASE("lstm cell") {
        ParameterSet p;
        init_lstm(p, "cell.", F, H, rng);
        NumArray x = random_array({1, F}, rng);
        NumArray h0 = random_array({1, H}, rng);
        NumArray c0 = random_array({1, H}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            auto w = bind_lstm(t, ps, "cell.");
            LstmState st{t.constant(h0), t.constant(c0)};
            st = lstm_cell_step(t, t.constant(x), st, w);
            return t.sum(t.add(st.h, st.c));
        };
        CHECK(grad_check(fn, p, 1e-5, 40, 4).worst <= 1e-5);
    }
    SUBCASE("bilstm") {
        ParameterSet p;
        init_lstm(p, "f.", F, H, rng);
        init_lstm(p, "b.", F, H, rng);
        NumArray x = random_array({1, T, F}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            return t.sum(bilstm(t, t.constant(x), bind_lstm(t, ps, "f."), bind_lstm(t, ps, "b.")));
        };
        CHECK(grad_check(fn, p, 1e-5, 30, 5).worst <= 1e-5);
    }
    SUBCASE("gru and rnn") {
        ParameterSet p;
        init_gru(p, "gru.", F, H, rng);
        init_rnn(p, "rnn.", F, H, rng);
        NumArray x = random_array({1, F}, rng);
        NumArray h0 = random_array({1, H}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            NodeId g = gru_step(t, t.constant(x), t.constant(h0), bind_gru(t, ps, "gru."));
            NodeId r = rnn_step(t, t.constant(x), t.constant(h0), bind_rnn(t, ps, "rnn."));
            return t.sum(t.add(g, r));
        };
        CHECK(grad_check(fn, p, 1e-5, 40, 6).worst <= 1e-5);
    }
    SUBCASE("conv and max pool") {
        ParameterSet p;
        init_conv(p, "conv.", 3, F, 5, rng);
        NumArray x = random_array({2, T + 3, F}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            auto c = bind_conv(t, ps, "conv.");
            return t.sum(t.max_over_time(t.relu(t.conv1d(t.constant(x), c.w, c.b))));
        };
        CHECK(grad_check(fn, p, 1e-5, 40, 7).worst <= 1e-5);
    }
    SUBCASE("head") {
        ParameterSet p;
        init_head(p, "head.", 6, 4, rng);
        NumArray x = random_array({2, 6}, rng);
        auto fn = [&](Tape& t, const ParameterSet& ps) {
            return t.sum(head(t, t.constant(x), bind_head(t, ps, "head.")));
        };
        CHECK(grad_check(fn, p, 1e-5, 40, 8).worst <= 1e-5);
    }
}
