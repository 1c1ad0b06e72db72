// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include <cbr/error.hpp>
#include <cbr/eval.hpp>

#include "oracles.hpp"

using namespace cbr;

namespace {

Detection det(double s, double e, double score, int label = 1, std::string video = "v") {
  return {std::move(video), units(s, e), label, score, {}};
}

Annotation ann(double s, double e, int label = 1, std::string video = "v") {
  return {std::move(video), units(s, e), label};
}

struct Instance {
  std::vector<Detection> dets;
  std::vector<Annotation> anns;
};

Instance random_instance(Rng& rng, int max_dets = 5, int max_anns = 3) {
  Instance in;
  const char* videos[] = {"a", "b"};
  for (int i = 0, n = static_cast<int>(rng.uniform_int(1, max_anns)); i < n; ++i) {
    const double s = static_cast<double>(rng.uniform_int(0, 20));
    in.anns.push_back(ann(s, s + static_cast<double>(rng.uniform_int(1, 8)), static_cast<int>(rng.uniform_int(1, 2)),
                          videos[rng.uniform_int(0, 1)]));
  }
  for (int i = 0, n = static_cast<int>(rng.uniform_int(0, max_dets)); i < n; ++i) {
    const double s = static_cast<double>(rng.uniform_int(0, 20));
    in.dets.push_back(det(s, s + static_cast<double>(rng.uniform_int(1, 8)), static_cast<double>(rng.uniform_int(1, 4)) / 4.0,
                          static_cast<int>(rng.uniform_int(1, 2)), videos[rng.uniform_int(0, 1)]));
  }
  return in;
}

std::map<std::string, VideoMeta> metas_for(double seconds) {
  const auto frames = static_cast<std::uint32_t>(seconds * 30);
  return {{"v", VideoMeta{"v", 30.0, frames, 16}}, {"a", VideoMeta{"a", 30.0, frames, 16}},
          {"b", VideoMeta{"b", 30.0, frames, 16}}};
}

}  // namespace

TEST_CASE("recall examples") {
  const std::vector<Annotation> anns{ann(0, 10), ann(20, 30), ann(40, 50)};
  const auto exact = group_by_video(std::vector<Detection>{det(0, 10, 0.9), det(20, 30, 0.8), det(40, 50, 0.7)});
  CHECK(average_recall_at_an(exact, anns, 3, 0.5) == 1.0);
  CHECK(average_recall_at_an({}, anns, 3, 0.5) == 0.0);

  // [0,20) half-covers the first two annotations but can take only one
  const std::vector<Detection> two{det(0, 20, 0.9), det(20, 30, 0.8)};
  const auto g = group_by_video(two);
  CHECK(average_recall_at_an(g, anns, 10, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(oracle::optimal_matches(two, anns, 10, 0.5) == 2);
  CHECK_THROWS_AS(average_recall_at_an(g, {}, 10, 0.5), UndefinedMetricError);
}

TEST_CASE("recall at frequency") {
  const std::vector<Annotation> anns{ann(0, 10), ann(20, 30)};
  const std::vector<Detection> props{det(0, 10, 0.9), det(50, 60, 0.8), det(20, 30, 0.7)};
  const auto g = group_by_video(props);
  const auto m = metas_for(60.0);
  CHECK(average_recall_at_f(g, anns, m, 100.0, 0.5) == average_recall_at_an(g, anns, 1000, 0.5));
  CHECK(average_recall_at_f(g, anns, m, 0.0, 0.5) == 0.0);
  // 60 s at one proposal per second is a budget of 60
  CHECK(average_recall_at_f(g, anns, m, 1.0, 0.5) == average_recall_at_an(g, anns, 60, 0.5));
  CHECK(average_recall_at_f(g, anns, m, 2.0 / 60.0, 0.5) == average_recall_at_an(g, anns, 2, 0.5));
  CHECK(average_recall_at_f(g, anns, m, 2.0 / 60.0, 0.5) == 0.5);
}

TEST_CASE("average precision examples") {
  const std::vector<Annotation> one{ann(0, 10)};
  CHECK(*average_precision(std::vector<Detection>{det(0, 10, 0.9)}, one, 1, 0.5) == 1.0);
  CHECK(*average_precision(std::vector<Detection>{det(8, 20, 0.9)}, one, 1, 0.5) == 0.0);
  CHECK_FALSE(average_precision(std::vector<Detection>{det(0, 10, 0.9)}, one, 2, 0.5));

  // a false positive ranked first halves the precision of the hit
  const std::vector<Detection> fp_first{det(30, 40, 0.9), det(0, 10, 0.8)};
  CHECK(*average_precision(fp_first, one, 1, 0.5) == doctest::Approx(0.5));

  const auto r = mean_average_precision(fp_first, std::vector<Annotation>{ann(0, 10), ann(50, 60, 3)}, 3, 0.5);
  CHECK(r.per_class[0] == doctest::Approx(0.5));
  CHECK_FALSE(r.per_class[1]);
  CHECK(*r.per_class[2] == 0.0);
  CHECK(r.mean == doctest::Approx(0.25));
  CHECK_THROWS_AS(mean_average_precision(fp_first, std::vector<Annotation>{}, 3, 0.5), UndefinedMetricError);
}

TEST_CASE("metrics match brute-force oracles") {
  Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    const auto in = random_instance(rng);
    const double thr = std::vector<double>{0.1, 0.3, 0.5, 0.7}[static_cast<std::size_t>(rng.uniform_int(0, 3))];
    for (int label = 1; label <= 2; ++label) {
      const auto got = average_precision(in.dets, in.anns, label, thr);
      const auto want = oracle::average_precision(in.dets, in.anns, label, thr);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK(std::abs(*got - *want) <= 1e-9);
    }
    const auto g = group_by_video(in.dets);
    for (std::size_t an : {1, 2, 5}) {
      const double ar = average_recall_at_an(g, in.anns, an, thr);
      CHECK(std::abs(ar - oracle::recall_at(in.dets, in.anns, an, thr)) <= 1e-9);
      std::size_t best = 0;
      for (const char* v : {"a", "b"}) {
        std::vector<Detection> mine;
        for (const auto& d : in.dets)
          if (d.video_id == v) mine.push_back(d);
        best += oracle::optimal_matches(mine, in.anns, an, thr);
      }
      CHECK(ar <= static_cast<double>(best) / static_cast<double>(in.anns.size()) + 1e-12);
    }
  }
}

TEST_CASE("metric properties") {
  Rng rng(66);
  for (int trial = 0; trial < 300; ++trial) {
    auto in = random_instance(rng, 8, 3);
    const auto g = group_by_video(in.dets);
    const auto m = metas_for(20.0);
    double prev_an = 0, prev_f = 0;
    for (std::size_t an = 1; an <= 9; ++an) {
      const double v = average_recall_at_an(g, in.anns, an, 0.5);
      CHECK((v >= 0 && v <= 1));
      CHECK(v >= prev_an);
      prev_an = v;
      const double f = average_recall_at_f(g, in.anns, m, 0.05 * static_cast<double>(an), 0.5);
      CHECK(f >= prev_f);
      prev_f = f;
    }

    const int n = 2;
    double prev_map = 2.0;
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double v = mean_average_precision(in.dets, in.anns, n, t).mean;
      CHECK((v >= 0 && v <= 1));
      CHECK(v <= prev_map + 1e-12);
      prev_map = v;
    }

    if (!in.dets.empty()) {
      auto dup = in.dets;
      auto copy = dup[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dup.size()) - 1))];
      copy.score *= 0.5;
      dup.push_back(copy);
      for (int label = 1; label <= n; ++label) {
        const auto a = average_precision(in.dets, in.anns, label, 0.5);
        const auto b = average_precision(dup, in.anns, label, 0.5);
        if (a) CHECK(*b <= *a + 1e-12);
      }
    }

    // distinct scores make the input order irrelevant
    for (std::size_t i = 0; i < in.dets.size(); ++i) in.dets[i].score = 1.0 / static_cast<double>(i + 2);
    auto shuffled = in.dets;
    std::reverse(shuffled.begin(), shuffled.end());
    for (int label = 1; label <= n; ++label) {
      CHECK(average_precision(in.dets, in.anns, label, 0.5) == average_precision(shuffled, in.anns, label, 0.5));
    }
    CHECK(average_recall_at_an(group_by_video(in.dets), in.anns, 3, 0.5) ==
          average_recall_at_an(group_by_video(shuffled), in.anns, 3, 0.5));
  }
}

TEST_CASE("reports") {
  EvalConfig cfg;
  cfg.map_tious = {0.5};
  cfg.an_values = {1, 2};
  const std::vector<Annotation> anns{ann(0, 10), ann(20, 30, 2)};
  const std::vector<Detection> dets{det(0, 10, 0.9), det(20, 30, 0.8, 2)};
  const std::vector<std::string> names{"jump", "run"};
  const auto rows = detection_report(dets, anns, names, cfg);
  const auto csv = format_report_csv(rows, "# config_hash=x seed=1\n");
  CHECK(csv.rfind("# config_hash=x seed=1\nmetric,class,threshold,value\n", 0) == 0);
  CHECK(csv.find("AP,jump,0.50,1.000000") != std::string::npos);
  CHECK(csv.find("mAP,all,0.50,1.000000") != std::string::npos);

  const auto prows = proposal_report(group_by_video(dets), anns, metas_for(30.0), cfg);
  const auto pcsv = format_report_csv(prows);
  CHECK(pcsv.find("AR@AN=1,all,0.50,0.500000") != std::string::npos);
  CHECK(pcsv.find("AR@F=1") != std::string::npos);
  const auto summary = report_summary(rows);
  CHECK(summary.is_object());
}

TEST_CASE("eval config validation") {
  EvalConfig c;
  CHECK_NOTHROW(c.validate());
  c.map_tious = {0.0};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.frequency = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}
