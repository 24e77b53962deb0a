#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "reseb/checkpoint.hpp"
#include "reseb/grad_check.hpp"
#include "reseb/rng.hpp"
#include "reseb/tape.hpp"

using namespace reseb;

namespace {

NumArray make(Shape shape, std::vector<double> v) { return NumArray(std::move(shape), std::move(v)); }

NumArray random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    NumArray a = NumArray::zeros(std::move(shape));
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

} // namespace

TEST_CASE("matmul identity and selector") {
    Tape t;
    NodeId id2 = t.constant(make({2, 2}, {1, 0, 0, 1}));
    NodeId m = t.constant(make({2, 2}, {1, 2, 3, 4}));
    const NumArray& out = t.value(t.matmul(id2, m));
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 2.0);
    CHECK(out.at(1, 0) == 3.0);
    CHECK(out.at(1, 1) == 4.0);

    NodeId sel = t.constant(make({1, 2}, {1, 0}));
    NodeId col = t.constant(make({2, 1}, {2, 3}));
    const NumArray& picked = t.value(t.matmul(sel, col));
    CHECK(picked.size() == 1);
    CHECK(picked[0] == 2.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    NodeId a = t.constant(NumArray::zeros({2, 3}));
    NodeId b = t.constant(NumArray::zeros({2, 3}));
    try {
        t.matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(42);
    ParameterSet params;
    params.add("a", random_array({3, 4}, rng));
    params.add("b", random_array({4, 2}, rng));
    auto fn = [](Tape& t, const ParameterSet& p) {
        NodeId a = t.param("a", p.at("a"));
        NodeId b = t.param("b", p.at("b"));
        return t.sum(t.matmul(a, b));
    };
    auto rep = grad_check(fn, params, 1e-5, 50, 7);
    CHECK(rep.worst <= 1e-6);
}

TEST_CASE("softmax rows") {
    Tape t;
    SUBCASE("uniform on constant row") {
        const NumArray& out = t.value(t.softmax_rows(t.constant(make({1, 3}, {0, 0, 0}))));
        for (int j = 0; j < 3; ++j) CHECK(out[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("no overflow on extreme logits") {
        const NumArray& out = t.value(t.softmax_rows(t.constant(make({1, 2}, {1000, 0}))));
        CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("matches high-precision evaluation") {
        // frozen from a 40-digit evaluation of softmax([1,2,3])
        const NumArray& out = t.value(t.softmax_rows(t.constant(make({1, 3}, {1, 2, 3}))));
        CHECK(std::abs(out[0] - 0.0900305731703804579980221) <= 1e-12);
        CHECK(std::abs(out[1] - 0.2447284710547976524729596) <= 1e-12);
        CHECK(std::abs(out[2] - 0.6652409557748218895290183) <= 1e-12);
    }
}

TEST_CASE("softmax rows sum to one across magnitudes") {
    Rng rng(11);
    for (int it = 0; it < 200; ++it) {
        const double mag = rng.uniform(0.0, 1e3);
        Tape t;
        NumArray x = random_array({4, 6}, rng, -mag, mag);
        const NumArray& out = t.value(t.softmax_rows(t.constant(x)));
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int j = 0; j < 6; ++j) {
                const double v = out.at(r, j);
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("layer_norm constant rows") {
    Tape t;
    NodeId gamma = t.constant(NumArray::full({4}, 1.0));
    NodeId beta0 = t.constant(NumArray::zeros({4}));
    NodeId beta2 = t.constant(NumArray::full({4}, 2.0));
    NodeId x = t.constant(NumArray::full({2, 4}, 5.0));
    const NumArray& z = t.value(t.layer_norm(x, gamma, beta0, 1e-6));
    for (std::int64_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
    const NumArray& s = t.value(t.layer_norm(x, gamma, beta2, 1e-6));
    for (std::int64_t i = 0; i < s.size(); ++i) CHECK(s[i] == 2.0);
}

TEST_CASE("layer_norm statistics recomputation") {
    Tape t;
    const double eps = 1e-6;
    NodeId x = t.constant(make({1, 3}, {1, 2, 3}));
    NodeId gamma = t.constant(NumArray::full({3}, 1.0));
    NodeId beta = t.constant(NumArray::zeros({3}));
    const NumArray& out = t.value(t.layer_norm(x, gamma, beta, eps));

    double mean = (out[0] + out[1] + out[2]) / 3.0;
    CHECK(std::abs(mean) <= 1e-9);

    double var = 0.0;
    for (int j = 0; j < 3; ++j) var += (out[j] - mean) * (out[j] - mean);
    var /= 3.0;
    const double sigma2 = 2.0 / 3.0; // population variance of {1,2,3}
    CHECK(var == doctest::Approx(sigma2 / (sigma2 + eps)).epsilon(1e-12));
}

TEST_CASE("layer_norm zero-mean property") {
    Rng rng(3);
    for (int it = 0; it < 100; ++it) {
        Tape t;
        NumArray x = random_array({3, 5}, rng, -100.0, 100.0);
        NodeId out = t.layer_norm(t.constant(x), t.constant(NumArray::full({5}, rng.uniform(0.5, 2.0))),
                                  t.constant(NumArray::zeros({5})), 1e-6);
        const NumArray& v = t.value(out);
        for (int r = 0; r < 3; ++r) {
            double m = 0.0;
            for (int j = 0; j < 5; ++j) m += v.at(r, j);
            CHECK(std::abs(m / 5.0) <= 1e-9);
        }
    }
}

TEST_CASE("elementwise basics") {
    Tape t;
    CHECK(t.value(t.sigmoid(t.constant(NumArray::scalar(0.0))))[0] == 0.5);
    CHECK(t.value(t.tanh(t.constant(NumArray::scalar(0.0))))[0] == 0.0);
    const NumArray& r = t.value(t.relu(t.constant(make({3}, {-1, 0, 2}))));
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 2.0);

    NodeId a = t.constant(NumArray::zeros({2, 3}));
    NodeId b = t.constant(NumArray::zeros({2, 5}));
    std::vector<NodeId> xs{a, b};
    const NumArray& cat = t.value(t.concat_last(xs));
    CHECK(cat.shape() == Shape{2, 8});

    NodeId c = t.constant(NumArray::zeros({2, 4}));
    CHECK_THROWS_AS(t.add(a, c), DimensionError);
}

TEST_CASE("backward over sum gives ones, unused params stay zero") {
    ParameterSet params;
    params.add("w", NumArray::full({2, 3}, 0.5));
    params.add("unused", NumArray::full({4}, 1.0));
    Tape t;
    NodeId w = t.param("w", params.at("w"));
    t.param("unused", params.at("unused"));
    t.backward(t.sum(w));
    auto grads = t.gradients();
    for (std::int64_t i = 0; i < 6; ++i) CHECK(grads["w"][i] == 1.0);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(grads["unused"][i] == 0.0);
}

TEST_CASE("backward of zero-scaled parameter is zero") {
    ParameterSet params;
    params.add("w", NumArray::full({3}, 2.0));
    Tape t;
    NodeId w = t.param("w", params.at("w"));
    t.backward(t.sum(t.affine(w, 0.0, 0.0)));
    auto grads = t.gradients();
    for (std::int64_t i = 0; i < 3; ++i) CHECK(grads["w"][i] == 0.0);
}

TEST_CASE("backward requires scalar loss") {
    Tape t;
    NodeId v = t.constant(NumArray::zeros({3}));
    CHECK_THROWS_AS(t.backward(v), ContractError);
}

TEST_CASE("grad_check on a linear model is near exact") {
    ParameterSet params;
    params.add("w", NumArray::full({1}, 1.25));
    auto fn = [](Tape& t, const ParameterSet& p) {
        NodeId w = t.param("w", p.at("w"));
        NodeId x = t.constant(NumArray::scalar(3.0));
        return t.sum(t.mul(w, x));
    };
    auto rep = grad_check(fn, params);
    CHECK(rep.worst <= 1e-9);
}

TEST_CASE("kernels reject non-finite outputs") {
    Tape t;
    CHECK_THROWS_AS(t.constant(make({1}, {std::nan("")})), NumericError);
    NodeId big = t.constant(NumArray::full({2, 2}, 1e308));
    CHECK_THROWS_AS(t.matmul(big, big), NumericError);
}

TEST_CASE("determinism: identical inputs give identical bytes") {
    Rng rng(99);
    NumArray a = random_array({4, 4}, rng);
    NumArray b = random_array({4, 4}, rng);
    Tape t1, t2;
    const NumArray& o1 = t1.value(t1.softmax_rows(t1.matmul(t1.constant(a), t1.constant(b))));
    const NumArray& o2 = t2.value(t2.softmax_rows(t2.matmul(t2.constant(a), t2.constant(b))));
    CHECK(std::memcmp(o1.data(), o2.data(), sizeof(double) * static_cast<std::size_t>(o1.size())) == 0);
}

TEST_CASE("checkpoint container round-trips bit-exact") {
    Rng rng(5);
    ParameterSet params;
    params.add("layer.w", random_array({3, 4, 2}, rng, -1e6, 1e6));
    params.add("layer.b", make({4}, {0.0, -0.0, 5e-324, 1.7976931348623157e308}));
    params.add("empty_name_ok", random_array({1}, rng));

    const std::string path = (std::filesystem::temp_directory_path() / "reseb_ckpt_test.bin").string();
    save_checkpoint(path, params);
    ParameterSet loaded = load_checkpoint(path);

    REQUIRE(loaded.count() == params.count());
    for (std::size_t i = 0; i < params.items().size(); ++i) {
        const auto& [name, arr] = params.items()[i];
        const auto& [lname, larr] = loaded.items()[i];
        CHECK(lname == name);
        REQUIRE(larr.shape() == arr.shape());
        CHECK(std::memcmp(larr.data(), arr.data(), sizeof(double) * static_cast<std::size_t>(arr.size())) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects foreign files") {
    const std::string path = (std::filesystem::temp_directory_path() / "reseb_not_ckpt.bin").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("definitely not a container", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ContractError);
    std::remove(path.c_str());
}
