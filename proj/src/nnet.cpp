// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/nnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "cbr/error.hpp"
#include "cbr/rng.hpp"

namespace cbr {

void ModelShape::validate() const {
  if (input_dim == 0) throw ShapeError("model: input_dim must be >= 1");
  if (n_classes < 1) throw ShapeError("model: n_classes must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) throw ShapeError("model: hidden layer width must be >= 1");
  }
}

void ModelParameters::for_each(const std::function<void(std::span<double>)>& fn) {
  auto visit = [&](Dense& d) {
    fn({d.weight.data(), static_cast<std::size_t>(d.weight.size())});
    fn({d.bias.data(), static_cast<std::size_t>(d.bias.size())});
  };
  for (auto& layer : trunk) visit(layer);
  visit(cls_head);
  visit(reg_head);
}

void ModelParameters::for_each(const std::function<void(std::span<const double>)>& fn) const {
  auto visit = [&](const Dense& d) {
    fn({d.weight.data(), static_cast<std::size_t>(d.weight.size())});
    fn({d.bias.data(), static_cast<std::size_t>(d.bias.size())});
  };
  for (const auto& layer : trunk) visit(layer);
  visit(cls_head);
  visit(reg_head);
}

std::size_t ModelParameters::size() const {
  std::size_t n = 0;
  for_each([&](std::span<const double> t) { n += t.size(); });
  return n;
}

bool ModelParameters::all_finite() const {
  bool ok = true;
  for_each([&](std::span<const double> t) {
    ok = ok && std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); });
  });
  return ok;
}

bool ModelParameters::check_shape(const ModelShape& shape) const {
  if (trunk.size() != shape.hidden_dims.size()) return false;
  auto in = static_cast<Eigen::Index>(shape.input_dim);
  auto ok = [](const Dense& d, Eigen::Index out, Eigen::Index in) {
    return d.weight.rows() == out && d.weight.cols() == in && d.bias.size() == out;
  };
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    const auto out = static_cast<Eigen::Index>(shape.hidden_dims[i]);
    if (!ok(trunk[i], out, in)) return false;
    in = out;
  }
  return ok(cls_head, static_cast<Eigen::Index>(shape.num_logits()), in) &&
         ok(reg_head, static_cast<Eigen::Index>(shape.num_offsets()), in);
}

namespace {

Dense make_dense(std::size_t out, std::size_t in) {
  return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
          Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
}

ModelParameters zero_parameters(const ModelShape& shape) {
  ModelParameters p;
  std::size_t in = shape.input_dim;
  for (auto h : shape.hidden_dims) {
    p.trunk.push_back(make_dense(h, in));
    in = h;
  }
  p.cls_head = make_dense(shape.num_logits(), in);
  p.reg_head = make_dense(shape.num_offsets(), in);
  return p;
}

}  // namespace

ModelParameters init_parameters(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  ModelParameters p = zero_parameters(shape);
  Rng rng(seed);
  auto fill = [&](Dense& d) {
    const double a = std::sqrt(6.0 / static_cast<double>(d.weight.rows() + d.weight.cols()));
    double* w = d.weight.data();
    for (Eigen::Index i = 0; i < d.weight.size(); ++i) w[i] = rng.uniform(-a, a);
  };
  for (auto& layer : p.trunk) fill(layer);
  fill(p.cls_head);
  fill(p.reg_head);
  return p;
}

ModelParameters zeros_like(const ModelParameters& params) {
  ModelParameters z = params;
  z.for_each([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  return z;
}

OffsetPair StageOutput::offset_pair(int class_id, OffsetScheme scheme) const {
  if (class_id < 1 || 2 * static_cast<std::size_t>(class_id) > offsets.size()) {
    throw ShapeError("offset_pair: no offsets for class " + std::to_string(class_id));
  }
  const auto k = 2 * static_cast<std::size_t>(class_id - 1);
  return {offsets[k], offsets[k + 1], scheme};
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct Activations {
  std::vector<Eigen::MatrixXd> inputs;  // input of each trunk layer, then the trunk output
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each trunk layer
  Eigen::MatrixXd logits;
  Eigen::MatrixXd offsets;
};

Activations run_forward(const ModelParameters& params, const Eigen::MatrixXd& x) {
  Activations a;
  a.inputs.reserve(params.trunk.size() + 1);
  a.inputs.push_back(x);
  for (const auto& layer : params.trunk) {
    Eigen::MatrixXd z = layer.weight * a.inputs.back();
    z.colwise() += layer.bias;
    a.inputs.push_back(z.cwiseMax(0.0));
    a.pre.push_back(std::move(z));
  }
  const auto& h = a.inputs.back();
  a.logits = params.cls_head.weight * h;
  a.logits.colwise() += params.cls_head.bias;
  a.offsets = params.reg_head.weight * h;
  a.offsets.colwise() += params.reg_head.bias;
  return a;
}

/// Column-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

void check_targets(const ModelShape& shape, std::span<const Target> targets) {
  for (const auto& t : targets) {
    if (t.label < 0 || t.label > shape.regression_classes()) {
      throw ContractError("loss: label " + std::to_string(t.label) + " outside the model's classes");
    }
    if (t.label > 0 && !t.offsets) throw ContractError("loss: positive sample without a regression target");
  }
}

void check_batch(const ModelShape& shape, const Batch& batch) {
  if (batch.targets.empty()) throw ContractError("loss: empty batch");
  if (batch.features.rows() != static_cast<Eigen::Index>(shape.input_dim) ||
      batch.features.cols() != static_cast<Eigen::Index>(batch.targets.size())) {
    throw ShapeError("batch: feature matrix does not match model input or target count");
  }
  check_targets(shape, batch.targets);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

StageOutput forward(const ModelParameters& params, const ModelShape& shape, std::span<const double> feature) {
  if (feature.size() != shape.input_dim) {
    throw ShapeError("forward: feature length " + std::to_string(feature.size()) + ", model expects " +
                     std::to_string(shape.input_dim));
  }
  if (!params.check_shape(shape)) throw ShapeError("forward: parameters do not match the model shape");
  const Eigen::Map<const Eigen::VectorXd> x(feature.data(), static_cast<Eigen::Index>(feature.size()));
  Eigen::VectorXd h = x;
  for (const auto& layer : params.trunk) h = (layer.weight * h + layer.bias).cwiseMax(0.0);
  const Eigen::VectorXd logits = params.cls_head.weight * h + params.cls_head.bias;
  const Eigen::VectorXd offsets = params.reg_head.weight * h + params.reg_head.bias;
  const double m = logits.maxCoeff();
  const Eigen::ArrayXd e = (logits.array() - m).exp();
  const Eigen::ArrayXd p = e / e.sum();
  return {std::vector<double>(p.data(), p.data() + p.size()),
          std::vector<double>(offsets.data(), offsets.data() + offsets.size())};
}

LossValue loss(std::span<const StageOutput> outputs, std::span<const Target> targets, double lambda) {
  if (outputs.empty() || outputs.size() != targets.size()) {
    throw ContractError("loss: need a non-empty batch with one target per output");
  }
  LossValue v;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& t = targets[i];
    const auto& o = outputs[i];
    if (t.label < 0 || static_cast<std::size_t>(t.label) >= o.probabilities.size()) {
      throw ContractError("loss: label outside the output's classes");
    }
    v.cls -= std::log(o.probabilities[static_cast<std::size_t>(t.label)]);
    if (t.label > 0) {
      if (!t.offsets) throw ContractError("loss: positive sample without a regression target");
      const auto pred = o.offset_pair(t.label, t.offsets->scheme);
      v.reg += std::abs(pred.first - t.offsets->first) + std::abs(pred.second - t.offsets->second);
    }
  }
  const double n = static_cast<double>(outputs.size());
  v.cls /= n;
  v.reg /= n;
  v.total = v.cls + lambda * v.reg;
  return v;
}

LossValue batch_loss(const ModelParameters& params, const ModelShape& shape, const Batch& batch, double lambda) {
  check_batch(shape, batch);
  const auto act = run_forward(params, batch.features);
  const auto logp = log_softmax(act.logits);
  LossValue v;
  for (std::size_t i = 0; i < batch.targets.size(); ++i) {
    const auto& t = batch.targets[i];
    const auto c = static_cast<Eigen::Index>(i);
    v.cls -= logp(t.label, c);
    if (t.label > 0) {
      const auto k = 2 * static_cast<Eigen::Index>(t.label - 1);
      v.reg += std::abs(act.offsets(k, c) - t.offsets->first) + std::abs(act.offsets(k + 1, c) - t.offsets->second);
    }
  }
  const double n = static_cast<double>(batch.targets.size());
  v.cls /= n;
  v.reg /= n;
  v.total = v.cls + lambda * v.reg;
  return v;
}

GradientResult backward(const ModelParameters& params, const ModelShape& shape, const Batch& batch, double lambda) {
  check_batch(shape, batch);
  if (!params.check_shape(shape)) throw ShapeError("backward: parameters do not match the model shape");
  const auto act = run_forward(params, batch.features);
  const auto logp = log_softmax(act.logits);
  const double n = static_cast<double>(batch.targets.size());

  GradientResult out;
  out.grads = zeros_like(params);

  Eigen::MatrixXd dlogits = logp.array().exp();
  Eigen::MatrixXd doffsets = Eigen::MatrixXd::Zero(act.offsets.rows(), act.offsets.cols());
  for (std::size_t i = 0; i < batch.targets.size(); ++i) {
    const auto& t = batch.targets[i];
    const auto c = static_cast<Eigen::Index>(i);
    out.loss.cls -= logp(t.label, c);
    dlogits(t.label, c) -= 1.0;
    if (t.label > 0) {
      const auto k = 2 * static_cast<Eigen::Index>(t.label - 1);
      const double rs = act.offsets(k, c) - t.offsets->first;
      const double re = act.offsets(k + 1, c) - t.offsets->second;
      out.loss.reg += std::abs(rs) + std::abs(re);
      doffsets(k, c) = lambda * sign(rs);
      doffsets(k + 1, c) = lambda * sign(re);
    }
  }
  out.loss.cls /= n;
  out.loss.reg /= n;
  out.loss.total = out.loss.cls + lambda * out.loss.reg;
  dlogits /= n;
  doffsets /= n;

  const auto& h = act.inputs.back();
  out.grads.cls_head.weight = dlogits * h.transpose();
  out.grads.cls_head.bias = dlogits.rowwise().sum();
  out.grads.reg_head.weight = doffsets * h.transpose();
  out.grads.reg_head.bias = doffsets.rowwise().sum();

  Eigen::MatrixXd dh = params.cls_head.weight.transpose() * dlogits + params.reg_head.weight.transpose() * doffsets;
  for (std::size_t l = params.trunk.size(); l-- > 0;) {
    const Eigen::MatrixXd dz = dh.cwiseProduct((act.pre[l].array() > 0.0).cast<double>().matrix());
    out.grads.trunk[l].weight = dz * act.inputs[l].transpose();
    out.grads.trunk[l].bias = dz.rowwise().sum();
    if (l > 0) dh = params.trunk[l].weight.transpose() * dz;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_parameters(const ModelParameters& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void adam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state, double learning_rate,
               const AdamConfig& cfg) {
  if (!grads.all_finite()) throw DivergenceError("adam_step: non-finite gradient");
  std::vector<std::span<double>> p, m, v;
  std::vector<std::span<const double>> g;
  params.for_each([&](std::span<double> t) { p.push_back(t); });
  state.first_moment.for_each([&](std::span<double> t) { m.push_back(t); });
  state.second_moment.for_each([&](std::span<double> t) { v.push_back(t); });
  grads.for_each([&](std::span<const double> t) { g.push_back(t); });
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw ShapeError("adam_step: state does not match parameters");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size() || p[i].size() != m[i].size() || p[i].size() != v[i].size()) {
      throw ShapeError("adam_step: state does not match parameters");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].size(); ++k) {
      m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * g[i][k];
      v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * g[i][k] * g[i][k];
      p[i][k] -= learning_rate * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + cfg.epsilon);
    }
  }
  if (!params.all_finite()) throw DivergenceError("adam_step: parameters became non-finite");
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate: must be positive");
  if (!(lambda >= 0.0)) throw ValidationError("lambda: must be >= 0");
  if (batch_size < 2) throw ValidationError("batch_size: must be >= 2");
  if (epochs < 0) throw ValidationError("epochs: must be >= 0");
}

TrainingSet build_training_set(std::span<const UnitFeatureTable> tables, std::span<const Annotation> annotations,
                               std::span<const WindowScale> scales, const PoolingConfig& pooling,
                               OffsetScheme scheme, int n_classes) {
  TrainingSet set;
  set.n_classes = n_classes;
  std::vector<std::vector<double>> pooled;
  for (const auto& table : tables) {
    std::vector<Annotation> own;
    for (const auto& a : annotations) {
      if (a.video_id == table.meta().video_id) own.push_back(a);
    }
    const auto windows = generate_windows(table.meta(), scales);
    for (auto& lw : assign_labels(windows, own, table.meta(), scheme)) {
      if (lw.role == WindowRole::Ignored) continue;
      pooled.push_back(pool_clip_feature(table, lw.window, pooling));
      set.windows.push_back(std::move(lw));
    }
  }
  const auto dim = pooled.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(pooled.front().size());
  set.features.resize(dim, static_cast<Eigen::Index>(pooled.size()));
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    set.features.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(pooled[i].data(), dim);
  }
  return set;
}

TrainResult train(const TrainConfig& config, const ModelShape& shape, const TrainingSet& data) {
  config.validate();
  shape.validate();
  if (shape.stage != config.stage) throw ContractError("train: model shape and config disagree on the stage");
  if (data.features.rows() != static_cast<Eigen::Index>(shape.input_dim) && !data.windows.empty()) {
    throw ShapeError("train: training features do not match the model input");
  }

  TrainResult result{init_parameters(shape, config.seed), {}};
  if (config.epochs == 0) return result;

  std::size_t positives = 0;
  for (const auto& w : data.windows) positives += w.role == WindowRole::Positive;
  const auto comp = batch_composition(config.stage, config.batch_size, shape.n_classes, config.background_ratio);
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, (positives + comp.positives - 1) / comp.positives);

  Rng rng(mix_seed(config.seed, 1));
  AdamState state = AdamState::for_parameters(result.params);
  Batch batch;
  batch.features.resize(data.features.rows(), static_cast<Eigen::Index>(config.batch_size));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    LossValue sum;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const auto items =
          build_minibatch(data.windows, config.stage, config.batch_size, shape.n_classes, rng, config.background_ratio);
      batch.targets.clear();
      for (std::size_t i = 0; i < items.size(); ++i) {
        batch.features.col(static_cast<Eigen::Index>(i)) = data.features.col(static_cast<Eigen::Index>(items[i].index));
        batch.targets.push_back({items[i].label, items[i].target});
      }
      const auto g = backward(result.params, shape, batch, config.lambda);
      adam_step(result.params, g.grads, state, config.learning_rate, config.adam);
      sum.total += g.loss.total;
      sum.cls += g.loss.cls;
      sum.reg += g.loss.reg;
    }
    const double k = static_cast<double>(steps_per_epoch);
    result.log.push_back({epoch, {sum.total / k, sum.cls / k, sum.reg / k}});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const ModelShape& shape, const ModelParameters& params,
                     std::uint64_t seed, const nlohmann::json& extra) {
  nlohmann::json header = extra;
  header["format_version"] = kCheckpointFormatVersion;
  header["stage"] = std::string(to_string(shape.stage));
  header["seed"] = seed;
  header["shape"] = {{"input_dim", shape.input_dim}, {"hidden_dims", shape.hidden_dims}, {"n_classes", shape.n_classes}};
  header["param_count"] = params.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  params.for_each([&](std::span<const double> t) {
    for (double v : t) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                             static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
      out.write(bytes, 4);
    }
  });
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: missing header");
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(line);
    if (ck.header.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw FormatError("checkpoint: unsupported format_version");
    }
    const auto stage = parse_stage(ck.header.at("stage").get<std::string>());
    if (!stage) throw FormatError("checkpoint: unknown stage");
    ck.shape.stage = *stage;
    const auto& s = ck.header.at("shape");
    ck.shape.input_dim = s.at("input_dim").get<std::size_t>();
    ck.shape.hidden_dims = s.at("hidden_dims").get<std::vector<std::size_t>>();
    ck.shape.n_classes = s.at("n_classes").get<int>();
    ck.seed = ck.header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  ck.shape.validate();
  ck.params = zero_parameters(ck.shape);
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != 4 * ck.params.size()) {
    throw FormatError("checkpoint: parameter blob has " + std::to_string(blob.size()) + " bytes, expected " +
                      std::to_string(4 * ck.params.size()));
  }
  std::size_t offset = 0;
  ck.params.for_each([&](std::span<double> t) {
    for (double& v : t) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + b])) << (8 * b);
      v = std::bit_cast<float>(bits);
      offset += 4;
    }
  });
  if (!ck.params.all_finite()) throw DataError("checkpoint: non-finite parameter");
  return ck;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log, const std::string& preamble) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write training log " + path.string());
  out << preamble << "epoch,L,L_cls,L_reg\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.mean_loss.total, e.mean_loss.cls,
                  e.mean_loss.reg);
    out << buf;
  }
}

}  // namespace cbr
