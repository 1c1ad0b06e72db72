// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cbr/error.hpp"
#include "cbr/rng.hpp"

namespace cbr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ValidationError(key + ": " + why); };
  if (!parse_offset_scheme(offset_scheme)) {
    fail("offset_scheme", "unknown scheme '" + offset_scheme + "' (expected param, frame or unit)");
  }
  if (num_videos < 1) fail("num_videos", "must be >= 1");
  if (units_min < 1 || units_max < units_min) fail("units_min", "need 1 <= units_min <= units_max");
  if (dim < 1) fail("dim", "must be >= 1");
  if (n_classes < 1) fail("n_classes", "must be >= 1");
  if (instances_min < 1 || instances_max < instances_min) fail("instances_min", "need 1 <= instances_min <= instances_max");
  if (instance_length_min < 1 || instance_length_max < instance_length_min) {
    fail("instance_length_min", "need 1 <= instance_length_min <= instance_length_max");
  }
  if (!(signal_strength >= 0.0)) fail("signal_strength", "must be >= 0");
  if (!(noise_sigma > 0.0)) fail("noise_sigma", "must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction", "must be in (0, 1)");
  for (const auto& s : scales()) {
    if (s.stride < 1 || s.stride > s.length) fail("window_scales", format_window_scale(s) + " needs 1 <= stride <= length");
  }
  if (n_ctx < 0) fail("n_ctx", "must be >= 0");
  for (auto h : hidden_dims) {
    if (h < 1) fail("hidden_dims", "widths must be >= 1");
  }
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (batch_size < 2) fail("batch_size", "must be >= 2");
  if (!(lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (!(background_ratio > 0.0)) fail("background_ratio", "must be positive");
  if (proposal_epochs < 0) fail("proposal_epochs", "must be >= 0");
  if (detection_epochs < 0) fail("detection_epochs", "must be >= 0");
  cascade_config().validate();
  eval_config().validate();
}

SynthSpec ExperimentConfig::synth_spec() const {
  SynthSpec s;
  s.num_videos = num_videos;
  s.units_per_video = {units_min, units_max};
  s.dim = dim;
  s.n_classes = n_classes;
  s.instances_per_video = {instances_min, instances_max};
  s.instance_length_units = {instance_length_min, instance_length_max};
  s.signal_strength = signal_strength;
  s.noise_sigma = noise_sigma;
  s.seed = seed;
  return s;
}

std::vector<WindowScale> ExperimentConfig::scales() const {
  if (window_scales.empty()) throw ValidationError("window_scales: at least one scale is required");
  std::vector<WindowScale> out;
  for (const auto& s : window_scales) out.push_back(parse_window_scale(s));
  return out;
}

OffsetScheme ExperimentConfig::scheme() const {
  const auto s = parse_offset_scheme(offset_scheme);
  if (!s) throw ValidationError("offset_scheme: unknown scheme '" + offset_scheme + "' (expected param, frame or unit)");
  return *s;
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage) {
  return mix_seed(cfg.seed, stage == Stage::Proposal ? 11 : 12);
}

TrainConfig ExperimentConfig::train_config(Stage stage) const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.batch_size = batch_size;
  t.lambda = lambda;
  t.background_ratio = background_ratio;
  t.epochs = stage == Stage::Proposal ? proposal_epochs : detection_epochs;
  t.stage = stage;
  t.seed = stage_seed(*this, stage);
  return t;
}

CascadeConfig ExperimentConfig::cascade_config() const {
  CascadeConfig c;
  c.k_proposal = k_proposal;
  c.k_detection = k_detection;
  c.theta = theta;
  c.nms_tiou = nms_tiou;
  c.proposal_nms_tiou = proposal_nms_tiou;
  c.scheme = parse_offset_scheme(offset_scheme).value_or(OffsetScheme::BoundaryUnit);
  c.pooling = pooling();
  return c;
}

EvalConfig ExperimentConfig::eval_config() const {
  EvalConfig e;
  e.map_tious = map_tious;
  e.ar_tiou = ar_tiou;
  e.an_values = an_values;
  e.frequency = frequency;
  return e;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"seed", seed},
          {"num_videos", num_videos},
          {"units_min", units_min},
          {"units_max", units_max},
          {"dim", dim},
          {"n_classes", n_classes},
          {"instances_min", instances_min},
          {"instances_max", instances_max},
          {"instance_length_min", instance_length_min},
          {"instance_length_max", instance_length_max},
          {"signal_strength", signal_strength},
          {"noise_sigma", noise_sigma},
          {"test_fraction", test_fraction},
          {"window_scales", window_scales},
          {"n_ctx", n_ctx},
          {"offset_scheme", offset_scheme},
          {"hidden_dims", hidden_dims},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"lambda", lambda},
          {"background_ratio", background_ratio},
          {"proposal_epochs", proposal_epochs},
          {"detection_epochs", detection_epochs},
          {"k_proposal", k_proposal},
          {"k_detection", k_detection},
          {"theta", theta},
          {"nms_tiou", nms_tiou},
          {"proposal_nms_tiou", proposal_nms_tiou},
          {"map_tious", map_tious},
          {"ar_tiou", ar_tiou},
          {"an_values", an_values},
          {"frequency", frequency}};
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string artifact_preamble(const ExperimentConfig& cfg) {
  return "# config_hash=" + cfg.hash() + " seed=" + std::to_string(cfg.seed) + "\n";
}

// ---------------------------------------------------------------------------
// Data

namespace {

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json stamped(const ExperimentConfig& cfg, nlohmann::json j) {
  j["config_hash"] = cfg.hash();
  j["seed"] = cfg.seed;
  return j;
}

void record_config(const ExperimentConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir);
  write_json_file(cfg.out_dir / "config.json",
                  stamped(cfg, {{"command", command},
                                {"config", cfg.to_json()},
                                {"data_dir", cfg.data_dir.string()},
                                {"out_dir", cfg.out_dir.string()}}));
}

}  // namespace

void write_synthetic_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto data = generate_dataset(cfg.synth_spec());
  fs::create_directories(cfg.data_dir / "features");

  std::map<std::string, VideoMeta> metas;
  for (const auto& t : data.tables) {
    save_feature_table(t, cfg.data_dir / "features" / (t.meta().video_id + ".cbrf"));
    metas[t.meta().video_id] = t.meta();
  }
  std::vector<AnnotationRecord> records;
  for (const auto& a : data.annotations) records.push_back(to_record(a, metas.at(a.video_id)));
  save_annotation_records(records, cfg.data_dir / "annotations.json");
  save_class_vocabulary(data.class_names, cfg.data_dir / "classes.json");

  const int n = cfg.num_videos;
  int n_test = static_cast<int>(round_half_away(cfg.test_fraction * n));
  if (n >= 2) n_test = std::clamp(n_test, 1, n - 1);
  auto videos = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    const auto& meta = data.tables[static_cast<std::size_t>(i)].meta();
    videos.push_back({{"video_id", meta.video_id},
                      {"split", i < n - n_test ? "train" : "test"},
                      {"num_units", meta.num_units()},
                      {"fps", meta.fps},
                      {"unit_frames", meta.unit_frames}});
  }
  write_json_file(cfg.data_dir / "manifest.json",
                  stamped(cfg, {{"format_version", 1}, {"synth", cfg.to_json()}, {"videos", videos}}));
}

LoadedData load_split(const ExperimentConfig& cfg, Split split) {
  if (!fs::exists(cfg.data_dir / "manifest.json")) {
    throw ValidationError("data_dir: no manifest.json in '" + cfg.data_dir.string() + "' (run gen-data first)");
  }
  const auto manifest = read_json_file(cfg.data_dir / "manifest.json");
  LoadedData out;
  out.class_names = load_class_vocabulary(cfg.data_dir / "classes.json");
  const std::string wanted = split == Split::Train ? "train" : "test";
  try {
    for (const auto& v : manifest.at("videos")) {
      if (v.at("split").get<std::string>() != wanted) continue;
      const auto id = v.at("video_id").get<std::string>();
      auto table = load_feature_table(cfg.data_dir / "features" / (id + ".cbrf"));
      out.metas[id] = table.meta();
      out.tables.push_back(std::move(table));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  const int n_classes = static_cast<int>(out.class_names.size());
  for (const auto& r : load_annotation_records(cfg.data_dir / "annotations.json")) {
    const auto it = out.metas.find(r.video_id);
    if (it == out.metas.end()) continue;
    out.annotations.push_back(to_annotation(r, it->second, n_classes));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training and inference

ModelShape model_shape(const ExperimentConfig& cfg, Stage stage, int n_classes) {
  ModelShape s;
  s.input_dim = 3 * static_cast<std::size_t>(cfg.dim);
  s.hidden_dims = cfg.hidden_dims;
  s.n_classes = stage == Stage::Proposal ? 1 : n_classes;
  s.stage = stage;
  return s;
}

StageModel train_model(const ExperimentConfig& cfg, Stage stage, const LoadedData& train,
                       std::vector<EpochLog>* log) {
  cfg.validate();
  if (train.tables.empty()) throw ValidationError("train: the training split has no videos");
  const int n_classes = static_cast<int>(train.class_names.size());
  auto shape = model_shape(cfg, stage, n_classes);
  shape.input_dim = 3 * train.tables.front().dim();
  const auto set = build_training_set(train.tables, train.annotations, cfg.scales(), cfg.pooling(), cfg.scheme(),
                                      n_classes);
  auto result = cbr::train(cfg.train_config(stage), shape, set);
  if (log) *log = result.log;
  return {shape, std::move(result.params)};
}

InferenceOutput run_inference(const LoadedData& data, const StageModel& proposal, const StageModel& detection,
                              const ExperimentConfig& cfg, const CascadeConfig& cascade) {
  InferenceOutput out;
  const auto scales = cfg.scales();
  for (const auto& table : data.tables) {
    const auto windows = generate_windows(table.meta(), scales);
    auto r = run_cascade(table, windows, proposal.params, proposal.shape, detection.params, detection.shape, cascade);
    out.proposals.insert(out.proposals.end(), r.proposals.begin(), r.proposals.end());
    out.detections.insert(out.detections.end(), r.detections.begin(), r.detections.end());
  }
  std::stable_sort(out.proposals.begin(), out.proposals.end(), detection_order);
  std::stable_sort(out.detections.begin(), out.detections.end(), detection_order);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

fs::path checkpoint_path(const ExperimentConfig& cfg, Stage stage) {
  return cfg.out_dir / (std::string(to_string(stage)) + ".ckpt");
}

StageModel load_model(const ExperimentConfig& cfg, Stage stage) {
  const auto path = checkpoint_path(cfg, stage);
  if (!fs::exists(path)) {
    throw ValidationError("missing checkpoint " + path.string() + " (run `train --stage " +
                          std::string(to_string(stage)) + "` first)");
  }
  auto ck = load_checkpoint(path);
  if (ck.shape.stage != stage) throw ValidationError(path.string() + ": checkpoint is for the wrong stage");
  return {ck.shape, std::move(ck.params)};
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string format_threshold(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void command_gen_data(const ExperimentConfig& cfg) {
  write_synthetic_data(cfg);
  record_config(cfg, "gen-data");
}

void command_train(const ExperimentConfig& cfg, Stage stage) {
  cfg.validate();
  const auto data = load_split(cfg, Split::Train);
  std::vector<EpochLog> log;
  const auto model = train_model(cfg, stage, data, &log);
  record_config(cfg, "train");
  save_checkpoint(checkpoint_path(cfg, stage), model.shape, model.params, stage_seed(cfg, stage),
                  {{"config_hash", cfg.hash()}});
  write_training_log(cfg.out_dir / (std::string(to_string(stage)) + "_train_log.csv"), log, artifact_preamble(cfg));
}

void command_infer(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto data = load_split(cfg, Split::Test);
  const auto proposal = load_model(cfg, Stage::Proposal);
  const auto detection = load_model(cfg, Stage::Detection);
  const auto out = run_inference(data, proposal, detection, cfg, cfg.cascade_config());
  record_config(cfg, "infer");
  save_detections(cfg.out_dir / "proposals.json", out.proposals, data.metas);
  save_detections(cfg.out_dir / "detections.json", out.detections, data.metas);
}

void command_eval(const ExperimentConfig& cfg, Stage task) {
  cfg.validate();
  const auto data = load_split(cfg, Split::Test);
  const auto eval = cfg.eval_config();
  std::vector<MetricRow> rows;
  std::string name;
  if (task == Stage::Proposal) {
    const auto proposals = load_detections(cfg.out_dir / "proposals.json", data.metas);
    rows = proposal_report(group_by_video(proposals), data.annotations, data.metas, eval);
    name = "proposal";
  } else {
    const auto detections = load_detections(cfg.out_dir / "detections.json", data.metas);
    rows = detection_report(detections, data.annotations, data.class_names, eval);
    name = "detection";
  }
  record_config(cfg, "eval");
  write_text(cfg.out_dir / (name + "_metrics.csv"), format_report_csv(rows, artifact_preamble(cfg)));
  write_json_file(cfg.out_dir / (name + "_summary.json"), stamped(cfg, report_summary(rows)));
}

void command_ablate_offsets(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto train_data = load_split(cfg, Split::Train);
  const auto test_data = load_split(cfg, Split::Test);
  const int n = static_cast<int>(train_data.class_names.size());
  const double tiou = 0.5;

  std::string csv = artifact_preamble(cfg) + "variant,k_proposal,k_detection,metric,threshold,value\n";
  for (const char* scheme : {"param", "frame", "unit"}) {
    auto c = cfg;
    c.offset_scheme = scheme;
    c.k_proposal = 1;
    c.k_detection = 1;
    const auto proposal = train_model(c, Stage::Proposal, train_data);
    const auto detection = train_model(c, Stage::Detection, train_data);
    if (c.offset_scheme == "unit") {
      auto plain = c.cascade_config();
      plain.regress = false;
      const auto out = run_inference(test_data, proposal, detection, c, plain);
      csv += "no-regression,1,1,mAP,0.50," + format_value(mean_average_precision(out.detections, test_data.annotations, n, tiou).mean) + "\n";
    }
    const auto out = run_inference(test_data, proposal, detection, c, c.cascade_config());
    csv += std::string(scheme) + ",1,1,mAP,0.50," +
           format_value(mean_average_precision(out.detections, test_data.annotations, n, tiou).mean) + "\n";
  }
  record_config(cfg, "ablate-offsets");
  write_text(cfg.out_dir / "ablate_offsets.csv", csv);
}

void command_ablate_cascade(const ExperimentConfig& cfg, const std::vector<int>& k_values) {
  cfg.validate();
  if (k_values.empty()) throw ValidationError("k_values: at least one cascade depth is required");
  const auto train_data = load_split(cfg, Split::Train);
  const auto test_data = load_split(cfg, Split::Test);
  const int n = static_cast<int>(train_data.class_names.size());
  const auto proposal = train_model(cfg, Stage::Proposal, train_data);
  const auto detection = train_model(cfg, Stage::Detection, train_data);

  std::string csv = artifact_preamble(cfg) + "variant,k_proposal,k_detection,metric,threshold,value\n";
  for (int k : k_values) {
    auto c = cfg.cascade_config();
    c.k_proposal = k;
    const auto out = run_inference(test_data, proposal, detection, cfg, c);
    const double ar = average_recall_at_f(group_by_video(out.proposals), test_data.annotations, test_data.metas,
                                          cfg.frequency, cfg.ar_tiou);
    std::ostringstream f;
    f << "AR@F=" << cfg.frequency;
    csv += "proposal," + std::to_string(k) + "," + std::to_string(c.k_detection) + "," + f.str() + "," +
           format_threshold(cfg.ar_tiou) + "," + format_value(ar) + "\n";
  }
  for (int k : k_values) {
    auto c = cfg.cascade_config();
    c.k_detection = k;
    const auto out = run_inference(test_data, proposal, detection, cfg, c);
    csv += "detection," + std::to_string(c.k_proposal) + "," + std::to_string(k) + ",mAP,0.50," +
           format_value(mean_average_precision(out.detections, test_data.annotations, n, 0.5).mean) + "\n";
  }
  record_config(cfg, "ablate-cascade");
  write_text(cfg.out_dir / "ablate_cascade.csv", csv);
}

}  // namespace cbr
