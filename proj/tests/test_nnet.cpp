// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <cbr/error.hpp>
#include <cbr/nnet.hpp>
#include <cbr/synth.hpp>

#include "oracles.hpp"

using namespace cbr;

namespace {

ModelShape small_shape(Stage stage, int n, std::size_t in = 6) {
  ModelShape s;
  s.input_dim = in;
  s.hidden_dims = {8};
  s.n_classes = n;
  s.stage = stage;
  return s;
}

std::vector<double> features(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(n);
  for (auto& v : f) v = rng.normal();
  return f;
}

TrainingSet tiny_training_set(int n_classes) {
  SynthSpec spec;
  spec.num_videos = 3;
  spec.units_per_video = {80, 100};
  spec.dim = 6;
  spec.n_classes = n_classes;
  spec.instances_per_video = {3, 4};
  spec.instance_length_units = {4, 10};
  spec.seed = 17;
  const auto data = generate_dataset(spec);
  const std::vector<WindowScale> scales{{64, 32}, {128, 64}, {256, 128}};
  return build_training_set(data.tables, data.annotations, scales, PoolingConfig{}, OffsetScheme::BoundaryUnit,
                            n_classes);
}

}  // namespace

TEST_CASE("zero parameters give a uniform softmax and zero offsets") {
  const auto shape = small_shape(Stage::Detection, 20);
  const auto p = zeros_like(init_parameters(shape, 1));
  const auto out = forward(p, shape, features(6, 2));
  REQUIRE(out.probabilities.size() == 21);
  for (double q : out.probabilities) CHECK(q == doctest::Approx(1.0 / 21).epsilon(1e-12));
  REQUIRE(out.offsets.size() == 40);
  for (double o : out.offsets) CHECK(o == 0.0);
}

TEST_CASE("softmax outputs lie on the simplex and forward is deterministic") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto shape = small_shape(Stage::Detection, static_cast<int>(rng.uniform_int(1, 5)));
    const auto seed = rng.next_u64();
    const auto p = init_parameters(shape, seed);
    const auto f = features(6, seed);
    const auto a = forward(p, shape, f);
    const auto b = forward(init_parameters(shape, seed), shape, f);
    CHECK(a.probabilities == b.probabilities);
    CHECK(a.offsets == b.offsets);
    double sum = 0;
    for (double q : a.probabilities) {
      CHECK((q > 0.0 && q < 1.0));
      sum += q;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("model shapes") {
  const auto prop = small_shape(Stage::Proposal, 1);
  CHECK(prop.num_logits() == 2);
  CHECK(prop.num_offsets() == 2);
  const auto det = small_shape(Stage::Detection, 4);
  CHECK(det.num_logits() == 5);
  CHECK(det.num_offsets() == 8);
  const auto p = init_parameters(det, 5);
  CHECK(p.check_shape(det));
  CHECK_FALSE(p.check_shape(prop));
  CHECK(p.size() == 8 * 6 + 8 + 5 * 8 + 5 + 8 * 8 + 8);
  CHECK_THROWS_AS(forward(p, det, features(5, 1)), ShapeError);
}

TEST_CASE("loss examples") {
  SUBCASE("background sample has no regression loss") {
    const StageOutput out{{0.7, 0.3}, {3.0, -2.0}};
    const Target t{0, std::nullopt};
    const auto l = loss(std::span(&out, 1), std::span(&t, 1), 2.0);
    CHECK(l.reg == 0.0);
    CHECK(l.total == doctest::Approx(-std::log(0.7)));
  }
  SUBCASE("half-confident positive with unit offset error") {
    const StageOutput out{{0.5, 0.5}, {1.5, 0.5}};
    const Target t{1, OffsetPair{1.0, 1.0, OffsetScheme::BoundaryUnit}};
    const auto l = loss(std::span(&out, 1), std::span(&t, 1), 2.0);
    CHECK(l.total == doctest::Approx(2.6931).epsilon(1e-4));
    CHECK(l.reg == doctest::Approx(1.0));
  }
  SUBCASE("perfect prediction") {
    const StageOutput out{{0.0, 1.0}, {0.25, -0.5}};
    const Target t{1, OffsetPair{0.25, -0.5, OffsetScheme::BoundaryUnit}};
    CHECK(loss(std::span(&out, 1), std::span(&t, 1), 2.0).total == 0.0);
  }
}

TEST_CASE("batch loss is non-negative and permutation invariant") {
  Rng rng(40);
  for (int i = 0; i < 50; ++i) {
    auto g = oracle::random_gradient_case(rng);
    const double l = batch_loss(g.params, g.shape, g.batch, g.lambda).total;
    CHECK(l >= 0.0);
    Batch rev = g.batch;
    const auto n = rev.features.cols();
    for (Eigen::Index c = 0; c < n; ++c) rev.features.col(c) = g.batch.features.col(n - 1 - c);
    std::reverse(rev.targets.begin(), rev.targets.end());
    CHECK(batch_loss(g.params, g.shape, rev, g.lambda).total == doctest::Approx(l).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto g = oracle::random_gradient_case(rng);
    const auto analytic = oracle::flatten(backward(g.params, g.shape, g.batch, g.lambda).grads);
    const auto numeric = oracle::numeric_gradient(g.params, g.shape, g.batch, g.lambda, 1e-5);
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric, oracle::gradient_floor(g)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient structure") {
  Rng rng(77);
  auto g = oracle::random_gradient_case(rng);
  for (auto& t : g.batch.targets) t = Target{0, std::nullopt};
  const auto bg = backward(g.params, g.shape, g.batch, g.lambda).grads;
  CHECK(bg.reg_head.weight.isZero(0.0));
  CHECK(bg.reg_head.bias.isZero(0.0));

  auto pos = oracle::random_gradient_case(rng);
  for (auto& t : pos.batch.targets) t = Target{1, OffsetPair{0.3, -0.2, OffsetScheme::BoundaryUnit}};
  const auto base = oracle::flatten(backward(pos.params, pos.shape, pos.batch, 0.0).grads);
  const auto one = oracle::flatten(backward(pos.params, pos.shape, pos.batch, 1.0).grads);
  const auto two = oracle::flatten(backward(pos.params, pos.shape, pos.batch, 2.0).grads);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(two[i] - base[i] == doctest::Approx(2.0 * (one[i] - base[i])).epsilon(1e-9));
}

TEST_CASE("adam") {
  const auto shape = small_shape(Stage::Proposal, 1);
  auto p = init_parameters(shape, 9);
  const auto before = oracle::flatten(p);

  SUBCASE("zero gradient leaves parameters unchanged") {
    auto state = AdamState::for_parameters(p);
    adam_step(p, zeros_like(p), state, 0.005);
    CHECK(oracle::flatten(p) == before);
    CHECK(state.step == 1);
  }
  SUBCASE("first step moves each parameter by about lr against its gradient") {
    auto grads = zeros_like(p);
    Rng rng(1);
    grads.for_each([&](std::span<double> t) {
      for (double& v : t) v = rng.uniform(0.01, 5.0) * (rng.uniform() < 0.5 ? -1 : 1);
    });
    auto state = AdamState::for_parameters(p);
    adam_step(p, grads, state, 0.005);
    const auto after = oracle::flatten(p);
    const auto g = oracle::flatten(grads);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(after[i] - before[i] == doctest::Approx(g[i] > 0 ? -0.005 : 0.005).epsilon(1e-5));
  }
  SUBCASE("non-finite gradient") {
    auto grads = zeros_like(p);
    grads.cls_head.bias(0) = std::nan("");
    auto state = AdamState::for_parameters(p);
    CHECK_THROWS_AS(adam_step(p, grads, state, 0.005), DivergenceError);
  }
}

TEST_CASE("training") {
  const auto data = tiny_training_set(2);
  ModelShape shape;
  shape.input_dim = static_cast<std::size_t>(data.features.rows());
  shape.hidden_dims = {64};
  shape.n_classes = 2;
  shape.stage = Stage::Detection;
  TrainConfig cfg;
  cfg.stage = Stage::Detection;
  cfg.seed = 5;

  SUBCASE("epochs = 0 returns the initialization") {
    cfg.epochs = 0;
    const auto r = train(cfg, shape, data);
    CHECK(oracle::flatten(r.params) == oracle::flatten(init_parameters(shape, 5)));
    CHECK(r.log.empty());
  }
  SUBCASE("loss falls over the first five epochs and runs reproduce") {
    cfg.epochs = 5;
    const auto a = train(cfg, shape, data);
    REQUIRE(a.log.size() == 5);
    for (std::size_t e = 1; e < a.log.size(); ++e) CHECK(a.log[e].mean_loss.total < a.log[e - 1].mean_loss.total);
    const auto b = train(cfg, shape, data);
    CHECK(oracle::flatten(a.params) == oracle::flatten(b.params));
  }
  SUBCASE("stage mismatch") {
    cfg.stage = Stage::Proposal;
    CHECK_THROWS_AS(train(cfg, shape, data), ContractError);
  }
}

TEST_CASE("training set drops ignored windows") {
  const auto data = tiny_training_set(3);
  CHECK(data.features.cols() == static_cast<Eigen::Index>(data.windows.size()));
  std::size_t pos = 0;
  for (const auto& w : data.windows) {
    CHECK(w.role != WindowRole::Ignored);
    pos += w.role == WindowRole::Positive;
  }
  CHECK(pos > 0);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "cbr_nnet_test";
  std::filesystem::create_directories(dir);
  const auto shape = small_shape(Stage::Detection, 3);
  const auto p = init_parameters(shape, 11);
  save_checkpoint(dir / "m.ckpt", shape, p, 11, {{"config_hash", "abc"}});
  const auto c = load_checkpoint(dir / "m.ckpt");
  CHECK(c.shape == shape);
  CHECK(c.seed == 11);
  CHECK(c.header["config_hash"] == "abc");
  const auto a = oracle::flatten(p), b = oracle::flatten(c.params);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));

  std::ofstream(dir / "bad.ckpt") << "{\"format_version\": 1}\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), FormatError);
  std::filesystem::remove_all(dir);
}
