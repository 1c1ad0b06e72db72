// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <cbr/cascade.hpp>
#include <cbr/error.hpp>
#include <cbr/experiment.hpp>
#include <cbr/sampling.hpp>
#include <cbr/synth.hpp>

#include "oracles.hpp"

using namespace cbr;

namespace {

// One-dimensional table read through a model whose action logit equals the
// clip's internal mean and whose offsets slide the clip one unit right.
UnitFeatureTable ramp(std::vector<float> values) {
  const auto n = static_cast<std::uint32_t>(values.size());
  return {VideoMeta{"v", 30.0, n * 16, 16}, 1, std::move(values)};
}

ModelShape hand_shape(Stage stage) {
  ModelShape s;
  s.input_dim = 3;
  s.hidden_dims = {1};
  s.n_classes = 1;
  s.stage = stage;
  return s;
}

ModelParameters hand_model(Stage stage, double shift = 1.0) {
  auto p = zeros_like(init_parameters(hand_shape(stage), 1));
  p.trunk[0].weight(0, 1) = 1.0;
  p.cls_head.weight(1, 0) = 1.0;
  p.reg_head.bias.setConstant(-shift);
  return p;
}

CascadeConfig no_context() {
  CascadeConfig c;
  c.pooling.n_ctx = 0;
  c.theta = 0.0;
  return c;
}

UnitFeatureTable random_table(Rng& rng, std::int64_t n_units, std::size_t dim) {
  std::vector<float> data(static_cast<std::size_t>(n_units) * dim);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  return {VideoMeta{"r", 30.0, static_cast<std::uint32_t>(n_units * 16), 16}, dim, std::move(data)};
}

ModelShape random_shape(Rng& rng, Stage stage, std::size_t dim) {
  ModelShape s;
  s.input_dim = 3 * dim;
  s.hidden_dims = {static_cast<std::size_t>(rng.uniform_int(2, 12))};
  s.stage = stage;
  s.n_classes = stage == Stage::Detection ? static_cast<int>(rng.uniform_int(1, 4)) : 1;
  return s;
}

Detection det(double s, double e, double score, int label = 1, std::string video = "v") {
  return {std::move(video), units(s, e), label, score, {score}};
}

}  // namespace

TEST_CASE("proposal score is the product of step actionness") {
  const auto table = ramp({std::log(9.0f), std::log(4.0f), std::log(9.0f), 0, 0, 0});
  auto cfg = no_context();
  cfg.k_proposal = 3;
  const std::vector<TemporalInterval> w{units(0, 1)};
  const auto out = refine_proposals(table, w, hand_model(Stage::Proposal), hand_shape(Stage::Proposal), cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == doctest::Approx(0.648).epsilon(1e-6));
  REQUIRE(out[0].step_scores.size() == 3);
  CHECK(out[0].step_scores[1] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(out[0].interval == units(3, 4));

  cfg.theta = 0.7;
  CHECK(refine_proposals(table, w, hand_model(Stage::Proposal), hand_shape(Stage::Proposal), cfg).empty());
}

TEST_CASE("detection score is the product of chosen-class probabilities") {
  const auto table = ramp({std::log(7.0f / 3.0f), std::log(1.5f), 0, 0});
  auto cfg = no_context();
  cfg.k_detection = 2;
  const std::vector<Detection> props{det(0, 1, 0.5, 0)};
  const auto out = detect(table, props, hand_model(Stage::Detection), hand_shape(Stage::Detection), cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == doctest::Approx(0.42).epsilon(1e-6));
  CHECK(out[0].label == 1);
  CHECK(out[0].interval == units(2, 3));
}

TEST_CASE("background winning the last step drops the detection") {
  const auto table = ramp({1.0f, -1.0f, 0, 0});
  auto cfg = no_context();
  cfg.k_detection = 2;
  const std::vector<Detection> props{det(0, 1, 0.5, 0)};
  // second step pools unit 1: the ReLU trunk outputs 0, so p = (0.5, 0.5)
  CHECK(detect(table, props, hand_model(Stage::Detection), hand_shape(Stage::Detection), cfg).empty());
  cfg.k_detection = 1;
  CHECK(detect(table, props, hand_model(Stage::Detection), hand_shape(Stage::Detection), cfg).size() == 1);
}

TEST_CASE("zero offsets leave boundaries fixed") {
  Rng rng(5);
  const auto table = random_table(rng, 40, 3);
  const auto shape = random_shape(rng, Stage::Proposal, 3);
  auto p = init_parameters(shape, 3);
  p.reg_head.weight.setZero();
  p.reg_head.bias.setZero();
  const auto windows = generate_windows(table.meta(), std::vector<WindowScale>{{64, 16}, {128, 32}});
  CascadeConfig cfg;
  cfg.theta = 0.0;
  for (int k : {1, 3}) {
    cfg.k_proposal = k;
    const auto out = refine_proposals(table, windows, p, shape, cfg);
    REQUIRE(out.size() == windows.size());
    for (const auto& d : out) CHECK(std::find(windows.begin(), windows.end(), d.interval) != windows.end());
  }
}

TEST_CASE("one step equals single-shot regression") {
  Rng rng(6);
  const auto table = random_table(rng, 30, 2);
  const auto shape = random_shape(rng, Stage::Proposal, 2);
  const auto p = init_parameters(shape, 8);
  CascadeConfig cfg;
  cfg.k_proposal = 1;
  cfg.theta = 0.0;
  const auto windows = generate_windows(table.meta(), std::vector<WindowScale>{{64, 32}});
  for (const auto& w : windows) {
    const auto single = std::vector<TemporalInterval>{w};
    const auto out = refine_proposals(table, single, p, shape, cfg);
    const auto f = forward(p, shape, pool_clip_feature(table, w, cfg.pooling));
    auto moved = apply_offsets(w, f.offset_pair(1, cfg.scheme), table.meta());
    if (moved) {
      moved->start = std::clamp(moved->start, 0.0, 30.0);
      moved->end = std::clamp(moved->end, 0.0, 30.0);
    }
    if (!moved || !(moved->end > moved->start)) {
      CHECK(out.empty());
      continue;
    }
    REQUIRE(out.size() == 1);
    CHECK(out[0].interval == *moved);
    CHECK(out[0].score == f.actionness());
  }
}

TEST_CASE("one detection class behaves like proposal refinement") {
  Rng rng(7);
  const auto table = random_table(rng, 50, 2);
  auto shape = random_shape(rng, Stage::Proposal, 2);
  const auto p = init_parameters(shape, 4);
  auto dshape = shape;
  dshape.stage = Stage::Detection;
  CascadeConfig cfg;
  cfg.theta = 0.0;
  cfg.k_proposal = cfg.k_detection = 3;
  const auto windows = generate_windows(table.meta(), std::vector<WindowScale>{{64, 16}});
  std::vector<Detection> starts;
  for (const auto& w : windows) starts.push_back({"r", w, 0, 1.0, {}});
  const auto props = refine_proposals(table, windows, p, shape, cfg);
  const auto dets = detect(table, starts, p, dshape, cfg);
  for (const auto& d : dets) {
    const auto it = std::find_if(props.begin(), props.end(), [&](const Detection& q) {
      return q.interval == d.interval && q.score == d.score;
    });
    CHECK(it != props.end());
  }
  for (const auto& q : props) {
    if (q.step_scores.back() > 0.5) {
      CHECK(std::any_of(dets.begin(), dets.end(), [&](const Detection& d) { return d.interval == q.interval; }));
    }
  }
}

TEST_CASE("cascade traces match the reference loop") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto dim = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto table = random_table(rng, rng.uniform_int(10, 60), dim);
    for (auto stage : {Stage::Proposal, Stage::Detection}) {
      const auto shape = random_shape(rng, stage, dim);
      auto p = init_parameters(shape, rng.next_u64());
      p.reg_head.bias.setConstant(rng.uniform(-2, 2));
      CascadeConfig cfg;
      cfg.theta = 0.0;
      cfg.k_proposal = cfg.k_detection = static_cast<int>(rng.uniform_int(1, 4));
      const auto windows = generate_windows(table.meta(), std::vector<WindowScale>{{64, 16}});
      std::vector<Detection> got;
      if (stage == Stage::Proposal) {
        got = refine_proposals(table, windows, p, shape, cfg);
      } else {
        std::vector<Detection> starts;
        for (const auto& w : windows) starts.push_back({"r", w, 0, 1.0, {}});
        got = detect(table, starts, p, shape, cfg);
      }
      std::size_t expected = 0;
      for (const auto& w : windows) {
        const auto t = oracle::run_steps(table, w, p, shape, cfg, cfg.k_proposal);
        const bool kept = t.interval && t.score > 0.0 && (stage == Stage::Proposal || !t.background_last);
        if (!kept) continue;
        ++expected;
        const auto it = std::find_if(got.begin(), got.end(), [&](const Detection& d) {
          return d.interval == *t.interval && std::abs(d.score - t.score) <= 1e-12;
        });
        CHECK(it != got.end());
      }
      CHECK(got.size() == expected);
      for (const auto& d : got) {
        CHECK((d.interval.start >= 0 && d.interval.end <= static_cast<double>(table.num_units())));
        CHECK(d.interval.valid());
        double running = 1.0;
        for (double q : d.step_scores) {
          const double next = running * q;
          CHECK(next <= running);
          running = next;
        }
        CHECK(std::abs(running - d.score) <= 1e-12);
      }
    }
  }
}

TEST_CASE("nms cases") {
  CHECK(nms({det(0, 5, 0.3)}, 0.5).size() == 1);
  const auto same = nms({det(0, 10, 0.8), det(0, 10, 0.9)}, 0.5);
  REQUIRE(same.size() == 1);
  CHECK(same[0].score == 0.9);
  CHECK(nms({det(0, 10, 0.8), det(10, 20, 0.9)}, 0.5).size() == 2);
  // tIoU exactly at the threshold survives
  CHECK(nms({det(0, 10, 0.9), det(0, 5, 0.8)}, 0.5).size() == 2);
}

TEST_CASE("nms is idempotent and returns an ordered subset") {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> d;
    for (int i = 0, n = static_cast<int>(rng.uniform_int(0, 12)); i < n; ++i) {
      const double s = static_cast<double>(rng.uniform_int(0, 20));
      d.push_back(det(s, s + static_cast<double>(rng.uniform_int(1, 8)), static_cast<double>(rng.uniform_int(1, 5)) / 5.0));
    }
    const double thr = rng.uniform(0.1, 0.9);
    const auto once = nms(d, thr);
    const auto twice = nms(once, thr);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].interval == twice[i].interval);
      CHECK(once[i].score == twice[i].score);
      if (i > 0) CHECK(detection_order(once[i - 1], once[i]));
      for (std::size_t j = 0; j < i; ++j) CHECK(tiou(once[i].interval, once[j].interval) <= thr);
    }
  }
}

TEST_CASE("grouped nms keeps classes and videos apart") {
  const auto out = nms_grouped({det(0, 10, 0.9, 1), det(0, 10, 0.8, 2), det(0, 10, 0.7, 1, "w")}, 0.5);
  CHECK(out.size() == 3);
}

TEST_CASE("cascade config validation") {
  CascadeConfig c;
  CHECK_NOTHROW(c.validate());
  c.k_proposal = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.theta = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.nms_tiou = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("stage mismatch is a contract error") {
  const auto table = ramp({0, 0, 0, 0});
  const std::vector<TemporalInterval> w{units(0, 1)};
  CHECK_THROWS_AS(refine_proposals(table, w, hand_model(Stage::Detection), hand_shape(Stage::Detection), CascadeConfig{}),
                  ContractError);
}

TEST_CASE("detection file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "cbr_cascade_test";
  std::filesystem::create_directories(dir);
  const std::map<std::string, VideoMeta> metas{{"v", VideoMeta{"v", 30.0, 1600, 16}}};
  const std::vector<Detection> d{det(1, 4, 0.5, 2), det(3, 9, 0.75, 1)};
  save_detections(dir / "d.json", d, metas);
  const auto back = load_detections(dir / "d.json", metas);
  REQUIRE(back.size() == 2);
  CHECK(back[0].score == 0.75);
  CHECK(back[0].interval.start == doctest::Approx(3.0));
  CHECK(back[1].label == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("trained pipeline finds a planted class-2 instance") {
  SynthSpec spec;
  spec.num_videos = 13;
  spec.units_per_video = {90, 120};
  spec.instances_per_video = {1, 1};
  spec.instance_length_units = {6, 14};
  spec.seed = 31;
  const auto data = generate_dataset(spec);

  // hold out the first video whose single instance is class 2
  std::size_t held = data.tables.size();
  for (std::size_t i = 0; i < data.annotations.size(); ++i) {
    if (data.annotations[i].label == 2) {
      held = i;
      break;
    }
  }
  REQUIRE(held < data.tables.size());
  std::vector<UnitFeatureTable> train_tables;
  std::vector<Annotation> train_anns;
  for (std::size_t i = 0; i < data.tables.size(); ++i) {
    if (i == held) continue;
    train_tables.push_back(data.tables[i]);
    train_anns.push_back(data.annotations[i]);
  }
  const std::vector<WindowScale> scales{{64, 16}, {128, 32}, {256, 64}};
  const PoolingConfig pooling;
  StageModel models[2];
  for (auto stage : {Stage::Proposal, Stage::Detection}) {
    const int n = stage == Stage::Proposal ? 1 : 3;
    const auto set = build_training_set(train_tables, train_anns, scales, pooling, OffsetScheme::BoundaryUnit, n);
    ModelShape shape{static_cast<std::size_t>(set.features.rows()), {128}, n, stage};
    TrainConfig tc;
    tc.stage = stage;
    tc.seed = 2;
    tc.epochs = 15;
    models[stage == Stage::Detection] = {shape, train(tc, shape, set).params};
  }
  const auto& table = data.tables[held];
  const auto windows = generate_windows(table.meta(), scales);
  const auto r = run_cascade(table, windows, models[0].params, models[0].shape, models[1].params, models[1].shape,
                             CascadeConfig{});
  REQUIRE_FALSE(r.detections.empty());
  CHECK(r.detections.front().label == 2);
  CHECK(tiou(r.detections.front().interval, data.annotations[held].interval) >= 0.5);
}
