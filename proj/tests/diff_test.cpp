// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dfr/checkpoint.hpp"
#include "dfr/optim.hpp"
#include "dfr/tape.hpp"
#include "test_support.hpp"

using namespace dfr;
using namespace dfr::diff;
using dfr::testing::avoid_zero;
using dfr::testing::finite_diff;
using dfr::testing::max_grad_rel_err;
using dfr::testing::rand_tensor;
using dfr::testing::rel_err;
using dfr::testing::separate;
using dfr::testing::separate_entries;

namespace {

constexpr Real kGradTol = 1e-3;
constexpr Real kKinkMargin = 1e-3;
constexpr int kPoints = 100;

// Scalar projection of an op output with fixed weights, so the full Jacobian
// is exercised by one backward pass.
Real weighted(const Tensor& t, const std::vector<Real>& w) {
    Real acc = 0.0;
    for (std::size_t i = 0; i < t.values.size(); ++i) acc += w[i] * t.values[i];
    return acc;
}

std::vector<Real> probe_weights(std::size_t n, Rng& rng) {
    std::vector<Real> w(n);
    for (Real& v : w) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return w;
}

// Checks d(weighted(op(x, fixed...)))/dx against finite differences, where
// `forward` maps the probed tensor to the op output on a fresh tape.
void check_unary_grad(const std::function<Var(Tape&, Var)>& op, Tensor x, Rng& rng) {
    Tape tape;
    x.requires_grad = true;
    Var in = tape.leaf(x);
    Var out = op(tape, in);
    auto w = probe_weights(tape.value(out).numel(), rng);

    Var wv = tape.constant(Tensor(tape.value(out).shape, std::vector<Real>(w)));
    Var loss = tape.sum_all(tape.mul(out, wv));
    tape.backward(loss);
    Tensor analytic = tape.grad_of(in);

    auto f = [&](const Tensor& probe) {
        Tape t2;
        Var v = t2.leaf(probe);
        return weighted(t2.value(op(t2, v)), w);
    };
    REQUIRE(max_grad_rel_err(f, x, analytic) < kGradTol);
}

void check_binary_grad(const std::function<Var(Tape&, Var, Var)>& op, Tensor a, Tensor b,
                       Rng& rng) {
    Tape tape;
    a.requires_grad = true;
    b.requires_grad = true;
    Var va = tape.leaf(a);
    Var vb = tape.leaf(b);
    Var out = op(tape, va, vb);
    auto w = probe_weights(tape.value(out).numel(), rng);

    Var wv = tape.constant(Tensor(tape.value(out).shape, std::vector<Real>(w)));
    Var loss = tape.sum_all(tape.mul(out, wv));
    tape.backward(loss);
    Tensor ga = tape.grad_of(va);
    Tensor gb = tape.grad_of(vb);

    auto fa = [&](const Tensor& probe) {
        Tape t2;
        return weighted(t2.value(op(t2, t2.leaf(probe), t2.leaf(b))), w);
    };
    auto fb = [&](const Tensor& probe) {
        Tape t2;
        return weighted(t2.value(op(t2, t2.leaf(a), t2.leaf(probe))), w);
    };
    REQUIRE(max_grad_rel_err(fa, a, ga) < kGradTol);
    REQUIRE(max_grad_rel_err(fb, b, gb) < kGradTol);
}

}  // namespace

TEST_CASE("elementwise primitive values") {
    Tape tape;
    Var a = tape.constant(Tensor::vector({1.0, 0.2}));
    Var b = tape.constant(Tensor::vector({0.3, 0.9}));
    Var m = tape.min_elem(a, b);
    CHECK(tape.value(m).values == std::vector<Real>{0.3, 0.2});

    Var s = tape.softmax(tape.constant(Tensor::vector({0.0, 0.0})));
    CHECK(tape.value(s).at(0) == doctest::Approx(0.5));
    CHECK(tape.value(s).at(1) == doctest::Approx(0.5));

    Var sg = tape.sigmoid(tape.constant(Tensor::scalar(0.0)));
    CHECK(tape.value(sg).at(0) == doctest::Approx(0.5));
}

TEST_CASE("softmax rows sum to one and sigmoid stays in (0,1)") {
    Rng rng(11);
    Tape tape;
    Tensor x = rand_tensor({16, 7}, rng, -8.0, 8.0);
    Var s = tape.softmax(tape.constant(x));
    for (int r = 0; r < 16; ++r) {
        Real total = 0.0;
        for (int c = 0; c < 7; ++c) total += tape.value(s).at(r, c);
        CHECK(std::fabs(total - 1.0) < 1e-6);
    }
    Var sg = tape.sigmoid(tape.constant(rand_tensor({64}, rng, -30.0, 30.0)));
    for (Real v : tape.value(sg).values) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("backward of sum of squares") {
    Tape tape;
    Tensor x = Tensor::vector({1.0, 2.0});
    x.requires_grad = true;
    Var v = tape.leaf(x);
    Var loss = tape.sum_all(tape.mul(v, v));
    tape.backward(loss);
    Tensor g = tape.grad_of(v);
    CHECK(g.at(0) == doctest::Approx(2.0));
    CHECK(g.at(1) == doctest::Approx(4.0));
}

TEST_CASE("min routes gradient to the active branch only") {
    Tape tape;
    Tensor a = Tensor::scalar(0.2);
    Tensor b = Tensor::scalar(0.9);
    a.requires_grad = true;
    b.requires_grad = true;
    Var va = tape.leaf(a);
    Var vb = tape.leaf(b);
    Var loss = tape.sum_all(tape.min_elem(va, vb));
    tape.backward(loss);
    CHECK(tape.grad_of(va).at(0) == doctest::Approx(1.0));
    CHECK(tape.grad_of(vb).at(0) == doctest::Approx(0.0));
}

TEST_CASE("tie rules are deterministic and favor the lowest index") {
    Tape tape;
    Tensor a = Tensor::vector({0.5, 0.5});
    Tensor b = Tensor::vector({0.5, 0.5});
    a.requires_grad = true;
    b.requires_grad = true;
    Var va = tape.leaf(a);
    Var vb = tape.leaf(b);
    Var loss = tape.sum_all(tape.min_elem(va, vb));
    tape.backward(loss);
    // first operand wins ties
    CHECK(tape.grad_of(va).at(0) == 1.0);
    CHECK(tape.grad_of(vb).at(0) == 0.0);

    Tape t2;
    Tensor x = Tensor::vector({0.7, 0.7, 0.1});
    x.requires_grad = true;
    Var vx = t2.leaf(x);
    Var mx = t2.max_all(vx);
    t2.backward(mx);
    Tensor g = t2.grad_of(vx);
    CHECK(g.at(0) == 1.0);  // lowest index among the tied maxima
    CHECK(g.at(1) == 0.0);
    CHECK(g.at(2) == 0.0);
}

TEST_CASE("every primitive matches finite differences at random points") {
    Rng rng(2024);

    for (int k = 0; k < kPoints; ++k) {
        // smooth elementwise binaries
        {
            Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.add(x, y); }, a, b, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.sub(x, y); }, a, b, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.mul(x, y); }, a, b, rng);
        }
        // min with separated operands
        {
            Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
            separate(a, b, kKinkMargin);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.min_elem(x, y); }, a, b, rng);
        }
        // bias broadcast
        {
            Tensor m = rand_tensor({4, 3}, rng), v = rand_tensor({3}, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.add_rowvec(x, y); }, m, v, rng);
        }
        // matrix products
        {
            Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.matmul(x, y); }, a, b, rng);
            Tensor v = rand_tensor({4}, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.matmul(x, y); }, a, v, rng);
            Tensor c = rand_tensor({5, 4}, rng);
            check_binary_grad([](Tape& t, Var x, Var y) { return t.matmul_nt(x, y); }, a, c, rng);
        }
        // concat and broadcasts
        {
            Tensor a = rand_tensor({3, 2}, rng), b = rand_tensor({3, 3}, rng);
            check_binary_grad(
                [](Tape& t, Var x, Var y) { return t.concat_cols({x, y}); }, a, b, rng);
            check_unary_grad([](Tape& t, Var x) { return t.broadcast_rows(x, 5); },
                             rand_tensor({4}, rng), rng);
            check_unary_grad([](Tape& t, Var x) { return t.repeat_cols(x, 6); },
                             rand_tensor({4}, rng), rng);
        }
        // nonlinearities, away from kinks
        {
            Tensor x = rand_tensor({3, 4}, rng, -2.0, 2.0);
            avoid_zero(x, kKinkMargin);
            check_unary_grad([](Tape& t, Var v) { return t.relu(v); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.leaky_relu(v, 0.01); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.sigmoid(v); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.softmax(v); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.affine(v, 1.7, -0.3); }, x, rng);
        }
        // reductions with separated maxima
        {
            Tensor x = rand_tensor({5, 3}, rng);
            separate_entries(x, kKinkMargin);
            check_unary_grad([](Tape& t, Var v) { return t.colwise_max(v); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.max_all(v); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.sum_all(v); }, x, rng);
            check_unary_grad([](Tape& t, Var v) { return t.mean_all(v); }, x, rng);
        }
        // losses
        {
            Tensor pred = rand_tensor({6}, rng), target = rand_tensor({6}, rng);
            check_binary_grad([](Tape& t, Var p, Var q) { return t.mse(p, q); }, pred, target, rng);

            Tensor prob = rand_tensor({6}, rng, 0.05, 0.95);
            Tensor labels = Tensor::zeros({6});
            for (Real& v : labels.values) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
            check_unary_grad(
                [&labels](Tape& t, Var p) { return t.bce(p, t.constant(labels)); }, prob, rng);

            Tensor logits = rand_tensor({5}, rng, -2.0, 2.0);
            int target_idx = rng.uniform_int(0, 4);
            check_unary_grad(
                [target_idx](Tape& t, Var l) { return t.cross_entropy_logits(l, target_idx); },
                logits, rng);
        }
        // indexing
        {
            Tensor x = rand_tensor({4, 3}, rng);
            std::vector<int> idx = {0, 5, 5, 11};
            check_unary_grad([idx](Tape& t, Var v) { return t.gather(v, idx); }, x, rng);
            std::vector<int> rows = {2, 0, 2};
            check_unary_grad([rows](Tape& t, Var v) { return t.select_rows(v, rows); }, x, rng);
        }
    }
}

TEST_CASE("three layer mlp gradients match finite differences") {
    Rng rng(7);
    Tensor w1 = testing::rand_tensor({4, 8}, rng, -0.5, 0.5);
    Tensor b1 = testing::rand_tensor({8}, rng, -0.1, 0.1);
    Tensor w2 = testing::rand_tensor({8, 8}, rng, -0.5, 0.5);
    Tensor b2 = testing::rand_tensor({8}, rng, -0.1, 0.1);
    Tensor w3 = testing::rand_tensor({8, 1}, rng, -0.5, 0.5);
    Tensor b3 = testing::rand_tensor({1}, rng, -0.1, 0.1);
    Tensor input = testing::rand_tensor({5, 4}, rng);
    Tensor target = testing::rand_tensor({5, 1}, rng);

    auto forward = [&](Tape& t, const Tensor& tw1, const Tensor& tb1, const Tensor& tw2,
                       const Tensor& tb2, const Tensor& tw3, const Tensor& tb3) {
        Var x = t.constant(input);
        Var h1 = t.sigmoid(t.add_rowvec(t.matmul(x, t.leaf(tw1)), t.leaf(tb1)));
        Var h2 = t.sigmoid(t.add_rowvec(t.matmul(h1, t.leaf(tw2)), t.leaf(tb2)));
        Var out = t.add_rowvec(t.matmul(h2, t.leaf(tw3)), t.leaf(tb3));
        return t.mse(out, t.constant(target));
    };

    Tape tape;
    Var vw1 = tape.param("w1", w1), vb1 = tape.param("b1", b1);
    Var vw2 = tape.param("w2", w2), vb2 = tape.param("b2", b2);
    Var vw3 = tape.param("w3", w3), vb3 = tape.param("b3", b3);
    Var x = tape.constant(input);
    Var h1 = tape.sigmoid(tape.add_rowvec(tape.matmul(x, vw1), vb1));
    Var h2 = tape.sigmoid(tape.add_rowvec(tape.matmul(h1, vw2), vb2));
    Var out = tape.add_rowvec(tape.matmul(h2, vw3), vb3);
    Var loss = tape.mse(out, tape.constant(target));
    tape.backward(loss);

    struct Probe {
        const char* name;
        Tensor* tensor;
        Var var;
    };
    std::vector<Probe> probes = {{"w1", &w1, vw1}, {"b1", &b1, vb1}, {"w2", &w2, vw2},
                                 {"b2", &b2, vb2}, {"w3", &w3, vw3}, {"b3", &b3, vb3}};
    for (auto& p : probes) {
        auto f = [&](const Tensor& t) {
            Tensor tw1 = p.tensor == &w1 ? t : w1;
            Tensor tb1 = p.tensor == &b1 ? t : b1;
            Tensor tw2 = p.tensor == &w2 ? t : w2;
            Tensor tb2 = p.tensor == &b2 ? t : b2;
            Tensor tw3 = p.tensor == &w3 ? t : w3;
            Tensor tb3 = p.tensor == &b3 ? t : b3;
            Tape t2;
            return t2.value(forward(t2, tw1, tb1, tw2, tb2, tw3, tb3)).at(0);
        };
        CHECK_MESSAGE(max_grad_rel_err(f, *p.tensor, tape.grad_of(p.var)) < kGradTol, p.name);
    }
}

TEST_CASE("unreachable parameters report zero gradients") {
    Tape tape;
    Tensor used = Tensor::vector({2.0});
    Tensor unused = Tensor::vector({3.0, 4.0});
    Var vu = tape.param("used", used);
    tape.param("unused", unused);
    Var loss = tape.sum_all(tape.mul(vu, vu));
    tape.backward(loss);
    auto grads = tape.param_grads();
    REQUIRE(grads.size() == 2);
    CHECK(grads[0].first == "used");
    CHECK(grads[0].second.at(0) == doctest::Approx(4.0));
    CHECK(grads[1].first == "unused");
    CHECK(grads[1].second.values == std::vector<Real>{0.0, 0.0});
}

TEST_CASE("repeated parameter registration accumulates into one gradient") {
    Tape tape;
    Tensor w = Tensor::vector({1.5});
    Var v1 = tape.param("w", w);
    Var v2 = tape.param("w", w);
    CHECK(v1.id == v2.id);
    Var loss = tape.sum_all(tape.add(tape.mul(v1, v1), v2));
    tape.backward(loss);
    CHECK(tape.grad_of(v1).at(0) == doctest::Approx(2.0 * 1.5 + 1.0));
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape tape;
    Tensor x = Tensor::vector({1.0, 2.0});
    x.requires_grad = true;
    Var v = tape.leaf(x);
    CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
}

TEST_CASE("shape mismatches raise structured errors") {
    Tape tape;
    Var a = tape.constant(Tensor::zeros({2, 3}));
    Var b = tape.constant(Tensor::zeros({3, 3}));
    try {
        tape.add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(e.primitive() == "add");
        CHECK(e.lhs() == std::vector<int>{2, 3});
        CHECK(e.rhs() == std::vector<int>{3, 3});
        CHECK(std::string(e.what()).find("add") != std::string::npos);
        CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    }
    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
}

TEST_CASE("sgd step") {
    ParamStore store;
    store.add("p", Tensor::scalar(1.0));
    GradList grads;
    grads.emplace_back("p", Tensor::scalar(0.5));
    sgd_step(store, grads, 0.1);
    CHECK(store.find("p")->at(0) == doctest::Approx(0.95));

    // zero gradient leaves the parameter untouched
    GradList zero;
    zero.emplace_back("p", Tensor::scalar(0.0));
    Real before = store.find("p")->at(0);
    sgd_step(store, zero, 0.1);
    CHECK(store.find("p")->at(0) == before);
}

TEST_CASE("adam first step decreases the parameter by about lr") {
    ParamStore store;
    store.add("p", Tensor::scalar(2.0));
    Adam adam(Adam::Options{.lr = 0.01});
    GradList grads;
    grads.emplace_back("p", Tensor::scalar(1.0));
    adam.step(store, grads);
    // with g=1: mhat=1, vhat=1, so the update is lr / (1 + eps)
    Real expected = 2.0 - 0.01 / (1.0 + 1e-8);
    CHECK(store.find("p")->at(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients with the parameter name") {
    ParamStore store;
    store.add("enc.w", Tensor::scalar(1.0));
    Adam adam(Adam::Options{});
    GradList grads;
    grads.emplace_back("enc.w", Tensor::scalar(std::nan("")));
    try {
        adam.step(store, grads);
        FAIL("expected abort on NaN gradient");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
    }
}

TEST_CASE("adam is deterministic given identical inputs and state") {
    auto run = [] {
        ParamStore store;
        store.add("p", Tensor::vector({1.0, -2.0, 0.5}));
        Adam adam(Adam::Options{.lr = 0.05});
        for (int i = 0; i < 10; ++i) {
            GradList grads;
            grads.emplace_back("p", Tensor::vector({0.1 * i, -0.2, 0.3}));
            adam.step(store, grads);
        }
        return store.find("p")->values;
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(99);
    ParamStore store;
    store.add("enc.w", testing::rand_tensor({4, 3}, rng));
    store.add("dec.b", testing::rand_tensor({7}, rng));
    store.add("scalar", Tensor::scalar(0.25));

    auto dir = std::filesystem::temp_directory_path() / "dfr_ckpt_test";
    std::filesystem::create_directories(dir);
    auto p1 = (dir / "a.ckpt").string();
    auto p2 = (dir / "b.ckpt").string();

    save_checkpoint(store, p1);
    ParamStore loaded = read_checkpoint(p1);
    REQUIRE(loaded.count() == store.count());
    save_checkpoint(loaded, p2);

    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(p1) == slurp(p2));

    // loading into a store with a mismatched shape is an error
    ParamStore bad;
    bad.add("enc.w", Tensor::zeros({4, 3}));
    bad.add("dec.b", Tensor::zeros({6}));
    bad.add("scalar", Tensor::zeros({1}));
    CHECK_THROWS(load_checkpoint(bad, p1));

    std::filesystem::remove_all(dir);
}
