// Copyright 2026 The ANI Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ani/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ani/errors.hpp"
#include "ani/infotheory.hpp"
#include "ani/objective.hpp"
#include "ani/serialization.hpp"

namespace ani {

namespace {

// Stream ids carve independent RNG sequences out of one run seed.
enum Stream : uint64_t {
  kMaskInit = 1,
  kPrimaryInit,
  kNoise,
  kOrder,
  kValEval,
  kTestEval,
  kAttackerInit,
  kAttackerNoise,
  kAttackerOrder,
  kAttackerEval,
  kMiNoise,
  kMiProjection,
};

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " needs an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " needs a number, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " needs an unsigned integer, got '" + v + "'");
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dataset",       "method",          "lambda",
      "seed",          "data_root",       "out_dir",
      "train.epochs",  "train.batch_size", "train.lr",
      "train.momentum", "train.weight_decay", "train.lr_schedule",
      "train.optimizer", "train.threads",
      "arch.primary",  "arch.mask",
      "mi.samples",    "mi.k",            "mi.projection_dim",
      "eval.noise_votes",
      "sweep.lambdas", "sweep.workers",   "sweep.attack", "sweep.mi",
  };
  return keys;
}

class EpochCsv {
 public:
  EpochCsv(const std::string& path, const std::string& header) {
    if (path.empty()) return;
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics csv: " + path);
    out_ << header << '\n';
    out_.flush();
  }

  void row(const EpochStats& s) {
    if (!out_.is_open()) return;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f,%.8f,%.6f", s.epoch, s.loss, s.cross_entropy,
                  s.entropy_reg, s.val_primary_acc);
    out_ << buf << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

double view_primary_accuracy(Network& classifier, const TransformFn& transform,
                             const TrainView& view, Rng& rng, int batch_size) {
  int64_t correct = 0;
  std::vector<int32_t> idx;
  for (int64_t begin = 0; begin < view.size(); begin += batch_size) {
    const int64_t end = std::min(view.size(), begin + batch_size);
    idx.resize(static_cast<size_t>(end - begin));
    for (int64_t i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = static_cast<int32_t>(i);
    Tensor x = view.gather(idx);
    Tensor xp = transform(x, rng);
    Tensor logits = classifier.forward(xp, Pass::kInfer);
    const int64_t n_classes = logits.dim(1);
    for (int64_t r = 0; r < end - begin; ++r) {
      const float* row = logits.data() + r * n_classes;
      int64_t arg = 0;
      for (int64_t c = 1; c < n_classes; ++c) {
        if (row[c] > row[arg]) arg = c;
      }
      if (arg == view.primary_label(begin + r)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(view.size());
}

void require_finite(const LossBreakdown& lb, const Tensor* w, int epoch, int batch) {
  if (std::isfinite(lb.total)) return;
  float max_w = -1.0f;
  if (w) {
    for (int64_t i = 0; i < w->numel(); ++i) max_w = std::max(max_w, (*w)[i]);
  }
  std::ostringstream os;
  os << "loss became non-finite at epoch " << epoch << " batch " << batch
     << ": total=" << lb.total << " ce=" << lb.cross_entropy << " reg=" << lb.entropy_reg;
  if (w) os << " max(w)=" << max_w;
  throw NumericalError(os.str());
}

std::vector<int32_t> batch_labels(const TrainView& view, const std::vector<int32_t>& idx) {
  std::vector<int32_t> y(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) y[i] = view.primary_label(idx[i]);
  return y;
}

void save_sidecar(const std::string& ckpt_path, const std::string& arch,
                  const TrainConfig& cfg, uint64_t config_hash, int epoch) {
  nlohmann::json side;
  side["architecture"] = arch;
  side["dataset"] = cfg.dataset;
  side["seed"] = cfg.seed;
  side["lambda"] = cfg.lambda;
  side["epoch"] = epoch;
  side["config_hash"] = hex64(config_hash);
  write_text_file_atomic(ckpt_path + ".json", side.dump(2) + "\n");
}

}  // namespace

void TrainConfig::validate() const {
  dataset_spec(dataset);  // throws on unknown dataset
  if (method != "ani" && method != "cloak" && method != "plain") {
    throw ConfigError("method must be ani, cloak, or plain; got '" + method + "'");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (lr_schedule != "cosine") throw ConfigError("train.lr_schedule supports only 'cosine'");
  if (optimizer != "sgd_momentum") {
    throw ConfigError("train.optimizer supports only 'sgd_momentum'");
  }
  if (mi_samples < 100) throw ConfigError("mi.samples must be >= 100");
  if (mi_k < 1) throw ConfigError("mi.k must be >= 1");
  if (mi_projection_dim < 1) throw ConfigError("mi.projection_dim must be >= 1");
  if (noise_votes < 1) throw ConfigError("eval.noise_votes must be >= 1");
}

std::string TrainConfig::resolved_primary_arch() const {
  return primary_arch.empty() ? default_primary_arch(dataset_spec(dataset).name) : primary_arch;
}

std::string TrainConfig::resolved_mask_arch() const {
  return mask_arch.empty() ? default_mask_arch(dataset_spec(dataset).name) : mask_arch;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("dataset", dataset_spec(dataset).name);
  kv.set("method", method);
  kv.set("lambda", fmt_double(lambda));
  kv.set("seed", std::to_string(seed));
  kv.set("data_root", resolve_data_root(data_root));
  kv.set("out_dir", resolve_out_root(out_root));
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.lr", fmt_double(lr));
  kv.set("train.momentum", fmt_double(momentum));
  kv.set("train.weight_decay", fmt_double(weight_decay));
  kv.set("train.lr_schedule", lr_schedule);
  kv.set("train.optimizer", optimizer);
  kv.set("train.threads", std::to_string(threads));
  kv.set("arch.primary", resolved_primary_arch());
  kv.set("arch.mask", resolved_mask_arch());
  kv.set("mi.samples", std::to_string(mi_samples));
  kv.set("mi.k", std::to_string(mi_k));
  kv.set("mi.projection_dim", std::to_string(mi_projection_dim));
  kv.set("eval.noise_votes", std::to_string(noise_votes));
  return kv;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  validate_config_keys(kv);
  TrainConfig cfg;
  if (kv.has("dataset")) cfg.dataset = kv.get("dataset");
  if (kv.has("method")) cfg.method = kv.get("method");
  if (kv.has("lambda")) cfg.lambda = to_double("lambda", kv.get("lambda"));
  if (kv.has("seed")) cfg.seed = to_u64("seed", kv.get("seed"));
  if (kv.has("data_root")) cfg.data_root = kv.get("data_root");
  if (kv.has("out_dir")) cfg.out_root = kv.get("out_dir");
  if (kv.has("train.epochs")) cfg.epochs = to_int("train.epochs", kv.get("train.epochs"));
  if (kv.has("train.batch_size")) {
    cfg.batch_size = to_int("train.batch_size", kv.get("train.batch_size"));
  }
  if (kv.has("train.lr")) cfg.lr = to_double("train.lr", kv.get("train.lr"));
  if (kv.has("train.momentum")) cfg.momentum = to_double("train.momentum", kv.get("train.momentum"));
  if (kv.has("train.weight_decay")) {
    cfg.weight_decay = to_double("train.weight_decay", kv.get("train.weight_decay"));
  }
  if (kv.has("train.lr_schedule")) cfg.lr_schedule = kv.get("train.lr_schedule");
  if (kv.has("train.optimizer")) cfg.optimizer = kv.get("train.optimizer");
  if (kv.has("train.threads")) cfg.threads = to_int("train.threads", kv.get("train.threads"));
  if (kv.has("arch.primary")) cfg.primary_arch = kv.get("arch.primary");
  if (kv.has("arch.mask")) cfg.mask_arch = kv.get("arch.mask");
  if (kv.has("mi.samples")) cfg.mi_samples = to_int("mi.samples", kv.get("mi.samples"));
  if (kv.has("mi.k")) cfg.mi_k = to_int("mi.k", kv.get("mi.k"));
  if (kv.has("mi.projection_dim")) {
    cfg.mi_projection_dim = to_int("mi.projection_dim", kv.get("mi.projection_dim"));
  }
  if (kv.has("eval.noise_votes")) {
    cfg.noise_votes = to_int("eval.noise_votes", kv.get("eval.noise_votes"));
  }
  cfg.validate();
  return cfg;
}

uint64_t TrainConfig::identity_hash() const {
  KvConfig kv = to_kv();
  KvConfig filtered;
  for (const auto& [k, v] : kv.values()) {
    if (k == "data_root" || k == "out_dir" || k == "train.threads") continue;
    filtered.set(k, v);
  }
  return filtered.hash();
}

void validate_config_keys(const KvConfig& kv) {
  for (const auto& [key, value] : kv.values()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key: " + key);
  }
}

std::string resolve_out_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("ANI_OUT_DIR"); env && *env) return env;
  return "runs";
}

const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid = {0.0, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3};
  return grid;
}

void SgdMomentum::step(const std::vector<Param*>& params, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (Param* p : params) velocity_.push_back(Tensor::zeros(p->value.shape()));
  }
  if (velocity_.size() != params.size()) {
    throw DomainError("optimizer bound to a different parameter list");
  }
  const float m = static_cast<float>(momentum_);
  const float wd = static_cast<float>(weight_decay_);
  const float lrf = static_cast<float>(lr);
  for (size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    float* v = velocity_[i].data();
    float* g = p->grad.data();
    float* th = p->value.data();
    const int64_t n = p->value.numel();
#pragma omp parallel for
    for (int64_t j = 0; j < n; ++j) {
      v[j] = m * v[j] + (g[j] + wd * th[j]);
      th[j] -= lrf * v[j];
    }
  }
}

double cosine_lr(double lr0, int epoch, int total_epochs) {
  if (total_epochs < 1) throw DomainError("total_epochs must be >= 1");
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total_epochs));
}

JointResult train_joint(const TrainConfig& cfg, const TrainView& train, const TrainView& val,
                        const std::string& metrics_csv) {
  cfg.validate();
  if (cfg.method != "ani") throw ConfigError("train_joint requires method=ani");
  const Shape& chw = train.spec().image_shape;

  JointResult result;
  result.mask_net = build_mask_net(cfg.resolved_mask_arch(), chw);
  result.primary = build_primary(cfg.resolved_primary_arch(), chw, train.spec().n_primary_classes);
  Rng root(cfg.seed);
  result.mask_net->init(root.derive(kMaskInit).seed());
  result.primary->init(root.derive(kPrimaryInit).seed());

  std::vector<Param*> params = result.mask_net->params();
  for (Param* p : result.primary->params()) params.push_back(p);
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);

  Rng noise_rng = root.derive(kNoise);
  Rng val_rng_root = root.derive(kValEval);
  BatchOrder order(train.size(), cfg.batch_size, root.derive(kOrder).seed(), /*shuffle=*/true);
  EpochCsv csv(metrics_csv, "epoch,loss,ce,reg,val_primary_acc");

  std::vector<uint8_t> clamped;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    order.start_epoch(epoch);
    double sum_loss = 0.0, sum_ce = 0.0, sum_reg = 0.0;
    const int nb = order.n_batches();
    for (int b = 0; b < nb; ++b) {
      const std::vector<int32_t> idx = order.batch_indices(b);
      Tensor x = train.gather(idx);
      const std::vector<int32_t> y = batch_labels(train, idx);

      result.mask_net->zero_grad();
      result.primary->zero_grad();

      Tensor w_raw = result.mask_net->forward(x, Pass::kTrain);
      Tensor w = clamp_mask(w_raw, &clamped);
      NoiseSample noise = sample_noise(x.shape(), noise_rng);
      Tensor xp = inject_adaptive(x, w, noise.v);
      Tensor logits = result.primary->forward(xp, Pass::kTrain);

      Tensor dlogits;
      LossBreakdown lb = ani_loss(logits, y, w, cfg.lambda, &dlogits);
      require_finite(lb, &w, epoch, b);
      sum_loss += lb.total;
      sum_ce += lb.cross_entropy;
      sum_reg += lb.entropy_reg;

      Tensor dxp = result.primary->backward(dlogits);
      // dL/dw = dL/dx' * (x - v) + the regularizer term; clamped elements
      // pass no gradient.
      Tensor dw(w.shape());
      {
        const float* dxpp = dxp.data();
        const float* xs = x.data();
        const float* vs = noise.v.data();
        float* d = dw.data();
#pragma omp parallel for
        for (int64_t i = 0; i < dw.numel(); ++i) d[i] = dxpp[i] * (xs[i] - vs[i]);
      }
      add_entropy_reg_grad(w, cfg.lambda, dw);
      for (int64_t i = 0; i < dw.numel(); ++i) {
        if (clamped[static_cast<size_t>(i)]) dw[i] = 0.0f;
      }
      result.mask_net->backward(dw);

      opt.step(params, lr);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss = sum_loss / nb;
    stats.cross_entropy = sum_ce / nb;
    stats.entropy_reg = sum_reg / nb;
    Rng val_rng = val_rng_root.derive(static_cast<uint64_t>(epoch));
    stats.val_primary_acc = view_primary_accuracy(
        *result.primary, adaptive_transform(*result.mask_net), val, val_rng, 256);
    csv.row(stats);
    result.curve.push_back(stats);
  }
  return result;
}

CloakResult train_cloak(const TrainConfig& cfg, const TrainView& train, const TrainView& val,
                        const std::string& metrics_csv) {
  cfg.validate();
  if (cfg.method != "cloak") throw ConfigError("train_cloak requires method=cloak");
  const Shape& chw = train.spec().image_shape;
  const int64_t px = shape_numel(chw);

  CloakResult result;
  result.primary = build_primary(cfg.resolved_primary_arch(), chw, train.spec().n_primary_classes);
  Rng root(cfg.seed);
  result.primary->init(root.derive(kPrimaryInit).seed());

  // Positive parameterization sigma = exp(s); s starts at 0 so training
  // begins from unit noise on every pixel.
  Param log_sigma;
  log_sigma.name = "log_sigma";
  log_sigma.value = Tensor::zeros(chw);
  log_sigma.grad = Tensor::zeros(chw);

  std::vector<Param*> params = result.primary->params();
  params.push_back(&log_sigma);
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);

  Rng noise_rng = root.derive(kNoise);
  Rng val_rng_root = root.derive(kValEval);
  BatchOrder order(train.size(), cfg.batch_size, root.derive(kOrder).seed(), /*shuffle=*/true);
  EpochCsv csv(metrics_csv, "epoch,loss,ce,reg,val_primary_acc");

  Tensor sigma(chw);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    order.start_epoch(epoch);
    double sum_loss = 0.0, sum_ce = 0.0, sum_reg = 0.0;
    const int nb = order.n_batches();
    for (int b = 0; b < nb; ++b) {
      const std::vector<int32_t> idx = order.batch_indices(b);
      Tensor x = train.gather(idx);
      const std::vector<int32_t> y = batch_labels(train, idx);

      result.primary->zero_grad();
      log_sigma.grad.fill(0.0f);
      for (int64_t i = 0; i < px; ++i) sigma[i] = std::exp(log_sigma.value[i]);

      NoiseSample noise = sample_noise(x.shape(), noise_rng);
      CloakParams p;
      p.sigma = sigma;
      p.mu = Tensor::zeros(chw);
      p.b = Tensor::full(chw, 1.0f);
      Tensor xp = inject_cloak(x, p, noise.v);
      Tensor logits = result.primary->forward(xp, Pass::kTrain);

      Tensor dlogits;
      LossBreakdown lb = cloak_loss(logits, y, sigma, cfg.lambda, &dlogits);
      require_finite(lb, nullptr, epoch, b);
      sum_loss += lb.total;
      sum_ce += lb.cross_entropy;
      sum_reg += lb.entropy_reg;

      Tensor dxp = result.primary->backward(dlogits);
      // d(mean CE)/d(s_i) = sigma_i * sum_b dxp[b,i]*v[b,i]; the scale
      // regularizer contributes a flat -lambda per element.
      const int64_t batch = x.dim(0);
      const float* dxpp = dxp.data();
      const float* vs = noise.v.data();
#pragma omp parallel for
      for (int64_t i = 0; i < px; ++i) {
        double acc = 0.0;
        for (int64_t bi = 0; bi < batch; ++bi) {
          acc += static_cast<double>(dxpp[bi * px + i]) * vs[bi * px + i];
        }
        log_sigma.grad[i] = static_cast<float>(acc * sigma[i] - cfg.lambda);
      }

      opt.step(params, lr);
      for (int64_t i = 0; i < px; ++i) {
        log_sigma.value[i] = std::clamp(log_sigma.value[i], -10.0f, 10.0f);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss = sum_loss / nb;
    stats.cross_entropy = sum_ce / nb;
    stats.entropy_reg = sum_reg / nb;
    for (int64_t i = 0; i < px; ++i) sigma[i] = std::exp(log_sigma.value[i]);
    Rng val_rng = val_rng_root.derive(static_cast<uint64_t>(epoch));
    stats.val_primary_acc =
        view_primary_accuracy(*result.primary, cloak_transform(sigma), val, val_rng, 256);
    csv.row(stats);
    result.curve.push_back(stats);
  }
  for (int64_t i = 0; i < px; ++i) sigma[i] = std::exp(log_sigma.value[i]);
  result.sigma = sigma;
  return result;
}

PlainResult train_plain(const TrainConfig& cfg, const TrainView& train, const TrainView& val,
                        const std::string& metrics_csv) {
  cfg.validate();
  if (cfg.method != "plain") throw ConfigError("train_plain requires method=plain");
  const Shape& chw = train.spec().image_shape;

  PlainResult result;
  result.primary = build_primary(cfg.resolved_primary_arch(), chw, train.spec().n_primary_classes);
  Rng root(cfg.seed);
  result.primary->init(root.derive(kPrimaryInit).seed());

  std::vector<Param*> params = result.primary->params();
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);
  Rng val_rng_root = root.derive(kValEval);
  BatchOrder order(train.size(), cfg.batch_size, root.derive(kOrder).seed(), /*shuffle=*/true);
  EpochCsv csv(metrics_csv, "epoch,loss,ce,reg,val_primary_acc");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    order.start_epoch(epoch);
    double sum_loss = 0.0;
    const int nb = order.n_batches();
    for (int b = 0; b < nb; ++b) {
      const std::vector<int32_t> idx = order.batch_indices(b);
      Tensor x = train.gather(idx);
      const std::vector<int32_t> y = batch_labels(train, idx);
      result.primary->zero_grad();
      Tensor logits = result.primary->forward(x, Pass::kTrain);
      Tensor dlogits;
      const double ce = softmax_cross_entropy(logits, y, &dlogits);
      LossBreakdown lb{ce, ce, 0.0, 0.0};
      require_finite(lb, nullptr, epoch, b);
      sum_loss += ce;
      result.primary->backward(dlogits);
      opt.step(params, lr);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss = sum_loss / nb;
    stats.cross_entropy = stats.loss;
    stats.entropy_reg = 0.0;
    Rng val_rng = val_rng_root.derive(static_cast<uint64_t>(epoch));
    stats.val_primary_acc =
        view_primary_accuracy(*result.primary, identity_transform(), val, val_rng, 256);
    csv.row(stats);
    result.curve.push_back(stats);
  }
  return result;
}

AttackResult train_attacker(const TrainConfig& cfg, const TransformFn& transform,
                            const Dataset& train_with_z, const Dataset& val_with_z,
                            const Dataset& test_with_z, const std::string& metrics_csv) {
  cfg.validate();
  const Shape& chw = train_with_z.spec.image_shape;
  AttackResult result;
  result.attacker =
      build_attacker(cfg.resolved_primary_arch(), chw, train_with_z.spec.n_secondary_classes);
  Rng root(cfg.seed);
  result.attacker->init(root.derive(kAttackerInit).seed());

  std::vector<Param*> params = result.attacker->params();
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);
  Rng noise_rng = root.derive(kAttackerNoise);
  Rng eval_rng_root = root.derive(kAttackerEval);
  BatchOrder order(train_with_z.n, cfg.batch_size, root.derive(kAttackerOrder).seed(), true);
  EpochCsv csv(metrics_csv, "epoch,loss,ce,reg,val_secondary_acc");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    order.start_epoch(epoch);
    double sum_loss = 0.0;
    const int nb = order.n_batches();
    for (int b = 0; b < nb; ++b) {
      const std::vector<int32_t> idx = order.batch_indices(b);
      Tensor x = train_with_z.gather(idx);
      std::vector<int32_t> z(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) z[i] = train_with_z.z[static_cast<size_t>(idx[i])];
      result.attacker->zero_grad();
      Tensor xp = transform(x, noise_rng);
      Tensor logits = result.attacker->forward(xp, Pass::kTrain);
      Tensor dlogits;
      const double ce = softmax_cross_entropy(logits, z, &dlogits);
      LossBreakdown lb{ce, ce, 0.0, 0.0};
      require_finite(lb, nullptr, epoch, b);
      sum_loss += ce;
      result.attacker->backward(dlogits);
      opt.step(params, lr);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss = sum_loss / nb;
    stats.cross_entropy = stats.loss;
    Rng eval_rng = eval_rng_root.derive(static_cast<uint64_t>(epoch));
    stats.val_primary_acc =
        accuracy(*result.attacker, transform, val_with_z, Task::kSecondary, eval_rng);
    csv.row(stats);
    result.curve.push_back(stats);
  }
  Rng test_rng = root.derive(kTestEval);
  result.test_secondary_acc =
      accuracy(*result.attacker, transform, test_with_z, Task::kSecondary, test_rng, 256,
               cfg.noise_votes);
  return result;
}

namespace {

struct LoadedData {
  Dataset train, val, test;
};

LoadedData load_all(const TrainConfig& cfg) {
  const DatasetSpec spec = dataset_spec(cfg.dataset);
  LoadedData d;
  d.train = load_dataset(spec, Split::kTrain, cfg.data_root);
  d.val = load_dataset(spec, Split::kVal, cfg.data_root);
  d.test = load_dataset(spec, Split::kTest, cfg.data_root);
  return d;
}

}  // namespace

RunRecord execute_run(const TrainConfig& cfg) {
  cfg.validate();
  set_math_threads(cfg.threads);
  const KvConfig kv = cfg.to_kv();
  const DatasetSpec spec = dataset_spec(cfg.dataset);
  const std::string out_root = resolve_out_root(cfg.out_root);
  const std::string run_id =
      make_run_id(cfg.method, spec.name, cfg.lambda, cfg.seed, cfg.identity_hash());
  const std::string run_dir = out_root + "/" + run_id;
  std::filesystem::create_directories(run_dir);

  nlohmann::json manifest = manifest_new(cfg.method, spec.name, cfg.lambda, cfg.seed, kv);

  LoadedData data = load_all(cfg);
  TrainView train_view = strip_secondary(data.train);
  TrainView val_view = strip_secondary(data.val);

  RunRecord rec;
  rec.run_dir = run_dir;
  rec.run_id = run_id;
  rec.manifest_path = run_dir + "/manifest.json";
  const std::string csv_path = run_dir + "/metrics.csv";

  Rng root(cfg.seed);
  std::unique_ptr<Network> primary;
  std::unique_ptr<Network> mask_net;  // outlives the deployed transform
  TransformFn deployed = identity_transform();

  if (cfg.method == "ani") {
    JointResult jr = train_joint(cfg, train_view, val_view, csv_path);
    save_network(run_dir + "/psi.ckpt", *jr.mask_net);
    save_sidecar(run_dir + "/psi.ckpt", jr.mask_net->arch(), cfg, kv.hash(), cfg.epochs);
    save_network(run_dir + "/theta.ckpt", *jr.primary);
    save_sidecar(run_dir + "/theta.ckpt", jr.primary->arch(), cfg, kv.hash(), cfg.epochs);
    manifest["artifacts"]["psi"] = run_dir + "/psi.ckpt";
    manifest["artifacts"]["theta"] = run_dir + "/theta.ckpt";
    rec.curve = jr.curve;
    primary = std::move(jr.primary);
    mask_net = std::move(jr.mask_net);
    deployed = adaptive_transform(*mask_net);
  } else if (cfg.method == "cloak") {
    CloakResult cr = train_cloak(cfg, train_view, val_view, csv_path);
    save_tensors(run_dir + "/sigma.ckpt", {{"sigma", &cr.sigma}});
    save_sidecar(run_dir + "/sigma.ckpt", "cloak_sigma", cfg, kv.hash(), cfg.epochs);
    save_network(run_dir + "/theta.ckpt", *cr.primary);
    save_sidecar(run_dir + "/theta.ckpt", cr.primary->arch(), cfg, kv.hash(), cfg.epochs);
    manifest["artifacts"]["sigma"] = run_dir + "/sigma.ckpt";
    manifest["artifacts"]["theta"] = run_dir + "/theta.ckpt";
    rec.curve = cr.curve;
    primary = std::move(cr.primary);
    deployed = cloak_transform(cr.sigma);
  } else {
    PlainResult pr = train_plain(cfg, train_view, val_view, csv_path);
    save_network(run_dir + "/theta.ckpt", *pr.primary);
    save_sidecar(run_dir + "/theta.ckpt", pr.primary->arch(), cfg, kv.hash(), cfg.epochs);
    manifest["artifacts"]["theta"] = run_dir + "/theta.ckpt";
    rec.curve = pr.curve;
    primary = std::move(pr.primary);
  }
  manifest["artifacts"]["metrics_csv"] = csv_path;

  Rng test_rng = root.derive(kTestEval);
  rec.test_primary_acc =
      accuracy(*primary, deployed, data.test, Task::kPrimary, test_rng, 256, cfg.noise_votes);

  if (mask_net) {
    // Mean mask over a test sample; near 1 means a near-identity transform.
    const int64_t n = std::min<int64_t>(2000, data.test.n);
    std::vector<int32_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = static_cast<int32_t>(i);
    Tensor w = mask_net->forward(data.test.gather(idx), Pass::kInfer);
    double mean_w = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) mean_w += w[i];
    manifest["metrics"]["mean_mask"] = mean_w / static_cast<double>(w.numel());
  }

  manifest["metrics"]["test_primary_acc"] = rec.test_primary_acc;
  if (!rec.curve.empty()) {
    manifest["metrics"]["final_train_loss"] = rec.curve.back().loss;
    manifest["metrics"]["final_val_primary_acc"] = rec.curve.back().val_primary_acc;
  }
  manifest["metrics"]["threads_used"] = math_threads();
  manifest_finish(manifest);
  write_manifest(manifest, rec.manifest_path);
  return rec;
}

TransformFn load_run_transform(const std::string& run_dir,
                               std::unique_ptr<Network>& mask_holder, Tensor& sigma_holder) {
  nlohmann::json m = read_manifest(run_dir + "/manifest.json");
  const std::string method = m.value("method", "");
  const DatasetSpec spec = dataset_spec(m.value("dataset", ""));
  if (method == "ani") {
    const std::string arch = m["config"].value("arch.mask", default_mask_arch(spec.name));
    mask_holder = build_mask_net(arch, spec.image_shape);
    load_network(run_dir + "/psi.ckpt", *mask_holder);
    return adaptive_transform(*mask_holder);
  }
  if (method == "cloak") {
    auto tensors = load_tensors(run_dir + "/sigma.ckpt");
    auto it = tensors.find("sigma");
    if (it == tensors.end()) throw IoError(run_dir + "/sigma.ckpt has no sigma tensor");
    sigma_holder = it->second;
    return cloak_transform(sigma_holder);
  }
  if (method == "plain") return identity_transform();
  throw ConfigError("manifest has unknown method: " + method);
}

double attack_run(const std::string& run_dir) {
  nlohmann::json m = read_manifest(run_dir + "/manifest.json");
  KvConfig kv;
  for (const auto& [k, v] : m["config"].items()) kv.set(k, v.get<std::string>());
  TrainConfig cfg = TrainConfig::from_kv(kv);
  set_math_threads(cfg.threads);

  std::unique_ptr<Network> mask_holder;
  Tensor sigma_holder;
  TransformFn transform = load_run_transform(run_dir, mask_holder, sigma_holder);

  LoadedData data = load_all(cfg);
  AttackResult ar = train_attacker(cfg, transform, data.train, data.val, data.test,
                                   run_dir + "/attack_metrics.csv");
  save_network(run_dir + "/phi.ckpt", *ar.attacker);
  save_sidecar(run_dir + "/phi.ckpt", ar.attacker->arch(), cfg, kv.hash(), cfg.epochs);

  m["metrics"]["attacker_secondary_acc"] = ar.test_secondary_acc;
  m["artifacts"]["phi"] = run_dir + "/phi.ckpt";
  m["artifacts"]["attack_metrics_csv"] = run_dir + "/attack_metrics.csv";
  write_manifest(m, run_dir + "/manifest.json");
  return ar.test_secondary_acc;
}

double mi_run(const std::string& run_dir) {
  nlohmann::json m = read_manifest(run_dir + "/manifest.json");
  KvConfig kv;
  for (const auto& [k, v] : m["config"].items()) kv.set(k, v.get<std::string>());
  TrainConfig cfg = TrainConfig::from_kv(kv);
  set_math_threads(cfg.threads);

  std::unique_ptr<Network> mask_holder;
  Tensor sigma_holder;
  TransformFn transform = load_run_transform(run_dir, mask_holder, sigma_holder);

  const DatasetSpec spec = dataset_spec(cfg.dataset);
  Dataset test = load_dataset(spec, Split::kTest, cfg.data_root);
  const int64_t n = std::min<int64_t>(cfg.mi_samples, test.n);
  std::vector<int32_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  Tensor x = test.gather(idx);
  Rng root(cfg.seed);
  Rng noise_rng = root.derive(kMiNoise);
  Tensor xp = transform(x, noise_rng);

  const int64_t dim = shape_numel(spec.image_shape);
  std::vector<float> x_rows(x.data(), x.data() + x.numel());
  std::vector<float> xp_rows(xp.data(), xp.data() + xp.numel());
  const uint64_t proj_seed = root.derive(kMiProjection).seed();
  NormalizedMiResult res = normalized_mi(x_rows, xp_rows, n, dim, cfg.mi_k, proj_seed,
                                         cfg.mi_projection_dim);

  m["metrics"]["mi_nats"] = res.mi_nats;
  m["metrics"]["input_entropy_nats"] = res.entropy_nats;
  m["metrics"]["mi_n_samples"] = res.n;
  m["metrics"]["mi_k"] = res.k;
  m["metrics"]["mi_projection_dim"] = res.projection_dim;
  m["metrics"]["mi_projection_seed"] = res.projection_seed;
  m["metrics"]["mi_jittered"] = res.jittered;
  if (res.defined) {
    m["metrics"]["normalized_mi"] = res.value;
  } else {
    m["metrics"]["normalized_mi"] = nullptr;
    m["metrics"]["normalized_mi_note"] = res.note;
  }
  write_manifest(m, run_dir + "/manifest.json");
  return res.defined ? res.value : std::nan("");
}

SweepResult run_sweep(const TrainConfig& base, const std::vector<double>& lambdas,
                      bool with_attack, bool with_mi) {
  if (lambdas.empty()) throw ConfigError("sweep needs a nonempty lambda list");
  for (size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > lambdas[i - 1])) {
      throw ConfigError("sweep lambdas must be strictly increasing");
    }
  }
  SweepResult sweep;
  sweep.dataset = dataset_spec(base.dataset).name;
  sweep.method = base.method;
  const std::string out_root = resolve_out_root(base.out_root);
  TrainConfig sweep_id_cfg = base;
  sweep_id_cfg.lambda = -1.0;  // lambda is swept, not part of the sweep id
  sweep.sweep_dir = out_root + "/sweep_" + base.method + "_" + sweep.dataset + "_" +
                    hex64(sweep_id_cfg.identity_hash()).substr(0, 8);
  std::filesystem::create_directories(sweep.sweep_dir);

  for (double lambda : lambdas) {
    TrainConfig cfg = base;
    cfg.lambda = lambda;
    try {
      RunRecord rec = execute_run(cfg);
      if (with_attack) attack_run(rec.run_dir);
      if (with_mi) mi_run(rec.run_dir);
      sweep.manifest_paths.push_back(rec.manifest_path);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "lambda=" << lambda << ": " << e.what();
      sweep.errors.push_back(os.str());
    }
  }
  sweep.points = assemble_tradeoff(sweep.manifest_paths);
  write_tradeoff_csv(sweep.points, sweep.sweep_dir + "/tradeoff.csv");

  nlohmann::json sj;
  sj["dataset"] = sweep.dataset;
  sj["method"] = sweep.method;
  sj["lambdas"] = lambdas;
  sj["manifests"] = sweep.manifest_paths;
  sj["errors"] = sweep.errors;
  sj["with_attack"] = with_attack;
  sj["with_mi"] = with_mi;
  sj["created_at"] = iso8601_utc_now();
  write_text_file_atomic(sweep.sweep_dir + "/sweep.json", sj.dump(2) + "\n");
  return sweep;
}

}  // namespace ani
