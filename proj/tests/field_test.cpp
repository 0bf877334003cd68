// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dfr/field.hpp"
#include "dfr/sampling.hpp"
#include "test_support.hpp"

using namespace dfr;
using namespace dfr::diff;
using dfr::ndf::FieldConfig;
using dfr::ndf::FieldModel;

namespace {

std::vector<data::PointSample> toy_cloud(std::uint64_t seed, int n) {
    data::ShapeSpec shape = data::generate_shape("table", seed);
    return data::sample_partial_cloud(shape, seed, n);
}

}  // namespace

TEST_CASE("encoder is exactly permutation invariant and duplicate stable") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);

    auto cloud = toy_cloud(4, 96);
    auto shuffled = cloud;
    Rng perm(9);
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1],
                  shuffled[static_cast<std::size_t>(perm.uniform_int(0, static_cast<int>(i) - 1))]);

    Tape t1, t2, t3;
    Tensor a = t1.value(model.encode(t1, cloud));
    Tensor b = t2.value(model.encode(t2, shuffled));
    CHECK(a.values == b.values);

    auto doubled = cloud;
    doubled.insert(doubled.end(), cloud.begin(), cloud.end());
    Tensor c = t3.value(model.encode(t3, doubled));
    CHECK(a.values == c.values);
}

TEST_CASE("different shapes produce different codes") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);
    Tape t1, t2;
    Tensor a = t1.value(model.encode(t1, toy_cloud(1, 128)));
    Tensor b = t2.value(model.encode(t2, toy_cloud(2, 128)));
    Real linf = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        linf = std::max(linf, std::fabs(a.values[i] - b.values[i]));
    CHECK(linf > 1e-6);
}

TEST_CASE("encode rejects an empty cloud") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);
    Tape tape;
    CHECK_THROWS_AS(model.encode(tape, {}), std::invalid_argument);
}

TEST_CASE("descriptor width follows the config formula") {
    CHECK(FieldConfig::desk().descriptor_dim() == 8 * 64 + 1);
    CHECK(FieldConfig::full_scale().descriptor_dim() == 2049);

    FieldConfig narrow;
    narrow.hidden = 32;
    CHECK(narrow.descriptor_dim() == 8 * 32 + 1);
    narrow.descriptor_occ_logit = false;
    CHECK(narrow.descriptor_dim() == 8 * 32);

    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);
    Tape tape;
    Var code = model.encode(tape, toy_cloud(5, 64));
    auto q = model.query(tape, code, {{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.2}, {0.9, -0.9, 0.1}});
    CHECK(tape.value(q.descriptors).shape == std::vector<int>{3, 513});
    for (Real o : tape.value(q.occupancy).values) {
        CHECK(o > 0.0);
        CHECK(o < 1.0);
    }
    for (Real c : tape.value(q.rgb).values) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("the full scale preset reproduces the published embedding width") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::full_scale(), store, rng);
    Tape tape;
    Var code = model.encode(tape, toy_cloud(6, 16));
    auto q = model.query(tape, code, {{0.0, 0.0, 0.0}, {0.3, 0.3, 0.3}});
    CHECK(tape.value(q.descriptors).shape == std::vector<int>{2, 2049});
}

TEST_CASE("descriptors are deterministic per (code, coordinate)") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);
    auto cloud = toy_cloud(7, 64);
    Tape t1, t2;
    auto q1 = model.query(t1, model.encode(t1, cloud), {{0.2, -0.1, 0.4}});
    auto q2 = model.query(t2, model.encode(t2, cloud), {{0.2, -0.1, 0.4}});
    CHECK(t1.value(q1.descriptors).values == t2.value(q2.descriptors).values);
}

TEST_CASE("query rejects out-of-cube coordinates") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);
    Tape tape;
    Var code = model.encode(tape, toy_cloud(8, 32));
    CHECK_THROWS_AS(model.query(tape, code, {{2.0, 0.0, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(model.query(tape, code, {}), std::invalid_argument);
}

TEST_CASE("reconstruction loss composes bce and masked color mse") {
    ParamStore store;
    Rng rng(3);
    FieldModel model(FieldConfig::desk(), store, rng);

    auto make_targets = [](std::vector<int> occ, std::vector<std::array<double, 3>> rgb) {
        std::vector<data::PointSample> t(occ.size());
        for (std::size_t i = 0; i < occ.size(); ++i) {
            t[i].occupancy = occ[i];
            t[i].rgb = rgb[i];
        }
        return t;
    };

    // flat 0.5 predictions give ln 2 per occupancy sample
    {
        Tape tape;
        FieldModel::Query q;
        q.occupancy = tape.leaf(Tensor::vector({0.5, 0.5, 0.5}));
        q.rgb = tape.leaf(Tensor::matrix(3, 3, {0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2}));
        auto targets = make_targets({0, 1, 0}, {{0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}});
        Var loss = model.reconstruction_loss(tape, q, targets);
        CHECK(tape.value(loss).at(0) == doctest::Approx(std::log(2.0)));
    }

    // perfect predictions give zero up to the bce clamp
    {
        Tape tape;
        FieldModel::Query q;
        q.occupancy = tape.leaf(Tensor::vector({1.0 - 1e-7, 1e-7}));
        q.rgb = tape.leaf(Tensor::matrix(2, 3, {0.8, 0.1, 0.3, 0.5, 0.5, 0.5}));
        auto targets = make_targets({1, 0}, {{0.8, 0.1, 0.3}, {0.0, 0.0, 0.0}});
        Var loss = model.reconstruction_loss(tape, q, targets);
        CHECK(tape.value(loss).at(0) == doctest::Approx(0.0).epsilon(1e-5));
    }

    // hand computed three sample batch: occupancies 0.8/0.3/0.9 vs 1/0/1,
    // color error only on the two occupied rows
    {
        Tape tape;
        FieldModel::Query q;
        q.occupancy = tape.leaf(Tensor::vector({0.8, 0.3, 0.9}));
        q.rgb = tape.leaf(Tensor::matrix(3, 3, {0.5, 0.5, 0.5, 0.9, 0.9, 0.9, 0.1, 0.4, 0.7}));
        auto targets = make_targets({1, 0, 1}, {{0.6, 0.5, 0.5}, {0.0, 0.0, 0.0}, {0.1, 0.4, 0.9}});
        Var loss = model.reconstruction_loss(tape, q, targets);
        Real bce = -(std::log(0.8) + std::log(1.0 - 0.3) + std::log(0.9)) / 3.0;
        Real mse = (0.01 + 0.04) / 6.0;
        CHECK(tape.value(loss).at(0) == doctest::Approx(bce + mse).epsilon(1e-9));
    }
}

TEST_CASE("field gradients match finite differences through encoder and decoder") {
    ParamStore store;
    Rng rng(12);
    FieldConfig cfg = FieldConfig::desk();
    cfg.hidden = 16;
    cfg.enc_hidden = 12;
    cfg.latent = 10;
    FieldModel model(cfg, store, rng);

    auto cloud = toy_cloud(3, 24);
    std::vector<data::Vec3> coords = {{0.1, 0.2, -0.3}, {-0.5, 0.4, 0.0}, {0.0, -0.2, 0.6},
                                      {0.7, 0.7, -0.7}};
    data::ShapeSpec shape = data::generate_shape("table", 3);
    Rng sup_rng(77);
    auto targets = data::sample_supervision(shape, 4, sup_rng);
    for (std::size_t i = 0; i < coords.size(); ++i) targets[i].xyz = coords[i];

    auto forward = [&]() -> Real {
        Tape tape;
        Var code = model.encode(tape, cloud);
        auto q = model.query(tape, code, coords);
        Var loss = model.reconstruction_loss(tape, q, targets);
        return tape.value(loss).at(0);
    };

    Tape tape;
    Var code = model.encode(tape, cloud);
    auto q = model.query(tape, code, coords);
    Var loss = model.reconstruction_loss(tape, q, targets);
    tape.backward(loss);
    auto grads = tape.param_grads();

    Rng pick(5);
    int checked = 0;
    Real worst = 0.0;
    for (int probe = 0; probe < 120; ++probe) {
        auto& entry = store.entries()[static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<int>(store.count()) - 1))];
        std::size_t idx = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<int>(entry->tensor.numel()) - 1));

        Real analytic = 0.0;
        for (auto& [name, g] : grads)
            if (name == entry->name) analytic = g.values[idx];

        Real keep = entry->tensor.values[idx];
        const Real h = 1e-4;
        entry->tensor.values[idx] = keep + h;
        Real up = forward();
        entry->tensor.values[idx] = keep - h;
        Real down = forward();
        entry->tensor.values[idx] = keep;
        Real numeric = (up - down) / (2.0 * h);

        worst = std::max(worst, testing::rel_err(analytic, numeric));
        ++checked;
    }
    CHECK(checked == 120);
    CHECK(worst < 1e-3);
}

TEST_CASE("field config text round trip") {
    FieldConfig c = FieldConfig::full_scale();
    c.descriptor_color_layers = false;
    FieldConfig back = FieldConfig::from_text(c.to_text());
    CHECK(back.hidden == c.hidden);
    CHECK(back.enc_blocks == c.enc_blocks);
    CHECK(back.descriptor_color_layers == false);
    CHECK(back.descriptor_dim() == c.descriptor_dim());
    CHECK_THROWS(FieldConfig::from_text("bogus = 3\n"));
}
