#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <functional>

#include "kgqa/autograd.hpp"
#include "kgqa/gradcheck.hpp"
#include "kgqa/rng.hpp"
#include "test_util.hpp"

using namespace kgqa;

using DGraph = GraphT<double>;
using DTensor = TensorT<double>;
using DParam = ParamT<double>;
using Id = DGraph::Id;

namespace {

// Builds the graph fresh per evaluation, as grad_check requires.
double check_op(const std::function<Id(DGraph&, std::vector<Id>&)>& build,
                std::vector<DParam*> params, int coords = 80) {
    GradCheckFn run = [&](bool bw) {
        DGraph g;
        std::vector<Id> pids;
        for (auto* p : params) pids.push_back(g.param(*p));
        Id loss = build(g, pids);
        double v = g.value(loss).at(0, 0);
        if (bw) g.backward(loss);
        return v;
    };
    return grad_check(run, params, 1e-5, coords, 1234).max_rel_err;
}

// Weighted sum keeps losses sensitive to every output coordinate (a plain sum
// of softmax rows would have an identically zero gradient).
Id weighted_sum(DGraph& g, Id x, uint64_t seed) {
    auto& v = g.value(x);
    Rng rng(seed);
    Id w = g.constant(testutil::random_tensor<double>(v.rows, v.cols, rng));
    return g.sum_all(g.hadamard(x, w));
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
    DGraph g;
    Id x = g.constant(DTensor::zeros(1, 3));
    Id y = g.row_softmax(x);
    for (int j = 0; j < 3; ++j) CHECK(g.value(y).at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one with entries in [0,1]") {
    Rng rng(3);
    GraphT<float> g;
    auto x = g.constant(testutil::random_tensor<float>(17, 9, rng, -30.f, 30.f));
    auto y = g.row_softmax(x);
    for (int i = 0; i < 17; ++i) {
        double s = 0;
        for (int j = 0; j < 9; ++j) {
            float v = g.value(y).at(i, j);
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
            s += v;
        }
        CHECK(std::fabs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("layer norm of a constant vector returns the bias") {
    DGraph g;
    Id x = g.constant(DTensor::full(2, 5, 3.7));
    Rng rng(5);
    DParam gamma("gamma", testutil::random_tensor<double>(1, 5, rng));
    DParam beta("beta", testutil::random_tensor<double>(1, 5, rng));
    Id y = g.layer_norm(x, g.param(gamma), g.param(beta));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(g.value(y).at(i, j) == doctest::Approx(beta.value.at(0, j)).epsilon(1e-9));
}

TEST_CASE("dropout with rate zero is the identity") {
    Rng rng(9);
    GraphT<float> g;
    auto t = testutil::random_tensor<float>(4, 6, rng);
    Id x = g.constant(t);
    Id y = g.dropout(x, std::vector<uint8_t>(t.numel(), 1), 0.0f);
    CHECK(std::memcmp(g.value(y).data.data(), t.data.data(), t.numel() * sizeof(float)) == 0);
}

TEST_CASE("dropout applies mask and inverse keep scaling") {
    DGraph g;
    DTensor t(1, 4);
    t.data = {1.0, 2.0, 3.0, 4.0};
    Id y = g.dropout(g.constant(t), {1, 0, 1, 0}, 0.5);
    CHECK(g.value(y).at(0, 0) == doctest::Approx(2.0));
    CHECK(g.value(y).at(0, 1) == 0.0);
    CHECK(g.value(y).at(0, 2) == doctest::Approx(6.0));
    CHECK(g.value(y).at(0, 3) == 0.0);
}

TEST_CASE("dropout masks are a pure function of the seed") {
    auto m1 = make_dropout_mask(64, 0.3, 42);
    auto m2 = make_dropout_mask(64, 0.3, 42);
    auto m3 = make_dropout_mask(64, 0.3, 43);
    CHECK(m1 == m2);
    CHECK(m1 != m3);
}

TEST_CASE("gradient of sum(W x) with x fixed broadcasts x") {
    DGraph g;
    Rng rng(17);
    DParam w("w", testutil::random_tensor<double>(2, 3, rng));
    DTensor x(3, 1);
    x.data = {0.5, -1.5, 2.0};
    Id loss = g.sum_all(g.matmul(g.param(w), g.constant(x)));
    g.backward(loss);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(w.grad.at(i, j) == doctest::Approx(x.at(j, 0)).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
    DGraph g;
    DParam logits("logits", DTensor(1, 2));
    logits.value.data = {1.0, 0.0};
    Id loss = g.cross_entropy(g.param(logits), 0);
    g.backward(loss);
    // softmax([1,0]) computed independently at 64-bit
    double e1 = std::exp(1.0), e0 = std::exp(0.0);
    double p0 = e1 / (e1 + e0), p1 = e0 / (e1 + e0);
    CHECK(logits.grad.at(0, 0) == doctest::Approx(p0 - 1.0).epsilon(1e-12));
    CHECK(logits.grad.at(0, 1) == doctest::Approx(p1).epsilon(1e-12));
    CHECK(g.value(loss).at(0, 0) == doctest::Approx(-std::log(p0)).epsilon(1e-12));
}

TEST_CASE("backward guards: double call, non-scalar loss, detached loss") {
    Rng rng(23);
    {
        DGraph g;
        DParam w("w", testutil::random_tensor<double>(2, 2, rng));
        Id loss = g.sum_all(g.param(w));
        g.backward(loss);
        CHECK_THROWS_AS(g.backward(loss), Error);
    }
    {
        DGraph g;
        DParam w("w", testutil::random_tensor<double>(2, 2, rng));
        Id y = g.param(w);
        CHECK_THROWS_AS(g.backward(y), Error);
    }
    {
        DGraph g;
        Id c = g.constant(DTensor::full(1, 1, 2.0));
        CHECK_THROWS_AS(g.backward(c), Error);
    }
}

TEST_CASE("parameters not reached by the loss keep zero gradients") {
    Rng rng(29);
    DGraph g;
    DParam used("used", testutil::random_tensor<double>(2, 2, rng));
    DParam unused("unused", testutil::random_tensor<double>(2, 2, rng));
    g.param(unused);
    Id loss = g.sum_all(g.param(used));
    g.backward(loss);
    for (double v : unused.grad.data) CHECK(v == 0.0);
    for (double v : used.grad.data) CHECK(v == 1.0);
}

TEST_CASE("shape mismatches raise errors naming the primitive and shapes") {
    DGraph g;
    Id a = g.constant(DTensor::zeros(2, 3));
    Id b = g.constant(DTensor::zeros(2, 3));
    try {
        g.matmul(a, b);
        FAIL("expected error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("2x3") != std::string::npos);
    }
    CHECK_THROWS_AS(g.add(a, g.constant(DTensor::zeros(3, 2))), Error);
    CHECK_THROWS_AS(g.segment_softmax(a, {0, 0}, 1), Error);
}

TEST_CASE("forward is bit-deterministic across repeated evaluation") {
    Rng rng(31);
    auto w1 = testutil::random_tensor<float>(8, 8, rng);
    auto x = testutil::random_tensor<float>(3, 8, rng);
    auto run = [&] {
        GraphT<float> g;
        auto y = g.row_softmax(g.gelu(g.matmul(g.constant(x), g.constant(w1))));
        return g.value(y);
    };
    auto a = run(), b = run();
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.numel() * sizeof(float)) == 0);
}

TEST_CASE("gradient check: identity of a parameter has zero error") {
    Rng rng(37);
    DParam w("w", testutil::random_tensor<double>(3, 3, rng));
    double err = check_op([](DGraph& g, std::vector<Id>& p) { return g.sum_all(p[0]); }, {&w});
    CHECK(err < 1e-9);
}

TEST_CASE("gradient check: two-layer MLP under 1e-4") {
    Rng rng(41);
    DParam w1("w1", testutil::random_tensor<double>(4, 5, rng));
    DParam b1("b1", testutil::random_tensor<double>(1, 5, rng));
    DParam w2("w2", testutil::random_tensor<double>(5, 3, rng));
    DParam b2("b2", testutil::random_tensor<double>(1, 3, rng));
    DTensor x = testutil::random_tensor<double>(2, 4, rng);
    double err = check_op(
        [&](DGraph& g, std::vector<Id>& p) {
            Id h = g.gelu(g.add_rowvec(g.matmul(g.constant(x), p[0]), p[1]));
            Id y = g.add_rowvec(g.matmul(h, p[2]), p[3]);
            return weighted_sum(g, y, 7);
        },
        {&w1, &b1, &w2, &b2}, 10);
    CHECK(err < 1e-4);
}

TEST_CASE("gradient check battery over every primitive") {
    Rng rng(43);

    SUBCASE("matmul") {
        DParam a("a", testutil::random_tensor<double>(3, 4, rng));
        DParam b("b", testutil::random_tensor<double>(4, 2, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                return weighted_sum(g, g.matmul(p[0], p[1]), 1);
            },
            {&a, &b});
        CHECK(err < 1e-4);
    }
    SUBCASE("add, add_rowvec, hadamard, mul_scalar") {
        DParam a("a", testutil::random_tensor<double>(3, 4, rng));
        DParam b("b", testutil::random_tensor<double>(3, 4, rng));
        DParam r("r", testutil::random_tensor<double>(1, 4, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                Id s = g.add_rowvec(g.add(p[0], p[1]), p[2]);
                return weighted_sum(g, g.mul_scalar(g.hadamard(s, p[0]), 1.3), 2);
            },
            {&a, &b, &r});
        CHECK(err < 1e-4);
    }
    SUBCASE("concat and slices") {
        DParam a("a", testutil::random_tensor<double>(2, 3, rng));
        DParam b("b", testutil::random_tensor<double>(2, 2, rng));
        DParam c("c", testutil::random_tensor<double>(1, 5, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                Id cc = g.concat_cols({p[0], p[1]});
                Id rr = g.concat_rows({cc, p[2]});
                Id s1 = g.slice_cols(rr, 1, 3);
                Id s2 = g.slice_rows(s1, 0, 2);
                return weighted_sum(g, s2, 3);
            },
            {&a, &b, &c});
        CHECK(err < 1e-4);
    }
    SUBCASE("transpose and replace_row") {
        DParam a("a", testutil::random_tensor<double>(3, 4, rng));
        DParam s("s", testutil::random_tensor<double>(1, 4, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                Id y = g.replace_row(p[0], p[1], 1);
                return weighted_sum(g, g.transpose(y), 4);
            },
            {&a, &s});
        CHECK(err < 1e-4);
    }
    SUBCASE("row_softmax with masked_fill") {
        DParam a("a", testutil::random_tensor<double>(3, 5, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                Id m = g.masked_fill_cols(p[0], {1, 1, 1, 0, 1}, kMaskFill);
                return weighted_sum(g, g.row_softmax(m), 5);
            },
            {&a});
        CHECK(err < 1e-4);
    }
    SUBCASE("layer_norm") {
        DParam x("x", testutil::random_tensor<double>(3, 6, rng));
        DParam gm("gm", testutil::random_tensor<double>(1, 6, rng));
        DParam bt("bt", testutil::random_tensor<double>(1, 6, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                return weighted_sum(g, g.layer_norm(p[0], p[1], p[2]), 6);
            },
            {&x, &gm, &bt});
        CHECK(err < 1e-4);
    }
    SUBCASE("gelu") {
        DParam x("x", testutil::random_tensor<double>(4, 4, rng, -3.0, 3.0));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) { return weighted_sum(g, g.gelu(p[0]), 7); },
            {&x});
        CHECK(err < 1e-4);
    }
    SUBCASE("dropout with explicit mask") {
        DParam x("x", testutil::random_tensor<double>(2, 6, rng));
        auto mask = make_dropout_mask(12, 0.4, 99);
        double err = check_op(
            [&](DGraph& g, std::vector<Id>& p) {
                return weighted_sum(g, g.dropout(p[0], mask, 0.4), 8);
            },
            {&x});
        CHECK(err < 1e-4);
    }
    SUBCASE("gather_rows") {
        DParam tbl("tbl", testutil::random_tensor<double>(6, 3, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                return weighted_sum(g, g.gather_rows(p[0], {4, 0, 4, 2, 5}), 9);
            },
            {&tbl});
        CHECK(err < 1e-4);
    }
    SUBCASE("segment softmax, segment sum, scale_rows, row_sum") {
        DParam logits("logits", testutil::random_tensor<double>(7, 1, rng));
        DParam rows("rows", testutil::random_tensor<double>(7, 3, rng));
        std::vector<int32_t> seg{0, 0, 1, 1, 1, 2, 3};
        double err = check_op(
            [&](DGraph& g, std::vector<Id>& p) {
                Id alpha = g.segment_softmax(p[0], seg, 4);
                Id scaled = g.scale_rows(p[1], alpha);
                Id agg = g.segment_sum(scaled, seg, 4);
                return weighted_sum(g, g.row_sum(agg), 10);
            },
            {&logits, &rows});
        CHECK(err < 1e-4);
    }
    SUBCASE("stack_scalars and cross_entropy") {
        DParam a("a", testutil::random_tensor<double>(1, 1, rng));
        DParam b("b", testutil::random_tensor<double>(1, 1, rng));
        DParam c("c", testutil::random_tensor<double>(1, 1, rng));
        double err = check_op(
            [](DGraph& g, std::vector<Id>& p) {
                Id logits = g.stack_scalars({p[0], p[1], p[2]});
                return g.cross_entropy(logits, 1);
            },
            {&a, &b, &c});
        CHECK(err < 1e-4);
    }
}

TEST_CASE("segment softmax normalizes every segment") {
    Rng rng(47);
    GraphT<float> g;
    auto logits = testutil::random_tensor<float>(9, 1, rng, -5.f, 5.f);
    std::vector<int32_t> seg{0, 0, 0, 1, 2, 2, 2, 2, 3};
    Id alpha = g.segment_softmax(g.constant(logits), seg, 4);
    std::vector<double> sums(4, 0.0);
    for (int i = 0; i < 9; ++i) sums[seg[i]] += g.value(alpha).at(i, 0);
    for (double s : sums) CHECK(std::fabs(s - 1.0) < 1e-6);
    // singleton segments get weight exactly 1
    CHECK(g.value(alpha).at(3, 0) == doctest::Approx(1.0f));
    CHECK(g.value(alpha).at(8, 0) == doctest::Approx(1.0f));
}

TEST_CASE("grad_check rejects bad epsilon and non-deterministic functions") {
    Rng rng(53);
    DParam w("w", testutil::random_tensor<double>(2, 2, rng));
    GradCheckFn ok = [&](bool bw) {
        DGraph g;
        Id loss = g.sum_all(g.param(w));
        double v = g.value(loss).at(0, 0);
        if (bw) g.backward(loss);
        return v;
    };
    CHECK_THROWS_AS(grad_check(ok, {&w}, 1e-2, 4, 1), Error);
    CHECK_THROWS_AS(grad_check(ok, {&w}, 1e-7, 4, 1), Error);

    int calls = 0;
    GradCheckFn flaky = [&](bool) { return double(calls++); };
    CHECK_THROWS_AS(grad_check(flaky, {&w}, 1e-5, 4, 1), Error);
}
