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

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ani/dataset.hpp"
#include "ani/evaluation.hpp"
#include "ani/manifest.hpp"
#include "ani/nets.hpp"

namespace ani {

struct TrainConfig {
  std::string dataset = "mnist";
  std::string method = "ani";  // ani | cloak | plain
  double lambda = 0.0;
  int epochs = 15;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string lr_schedule = "cosine";
  std::string optimizer = "sgd_momentum";
  uint64_t seed = 1;
  int threads = 0;  // 0 = all hardware threads
  std::string primary_arch;  // empty = dataset default
  std::string mask_arch;     // empty = dataset default
  std::string data_root;     // empty = ANI_DATA_ROOT or ./data
  std::string out_root;      // empty = ANI_OUT_DIR or ./runs
  int mi_samples = 2000;
  int mi_k = 3;
  int mi_projection_dim = 16;
  int noise_votes = 1;

  void validate() const;
  KvConfig to_kv() const;
  static TrainConfig from_kv(const KvConfig& kv);
  std::string resolved_primary_arch() const;
  std::string resolved_mask_arch() const;
  // Hash over the keys that define the experiment; paths and thread counts
  // do not change a run's identity.
  uint64_t identity_hash() const;
};

// Rejects configuration keys this project does not define; names the key.
void validate_config_keys(const KvConfig& kv);

std::string resolve_out_root(const std::string& explicit_root);

// Default lambda grid for sweeps. The regularizer sums over input elements,
// so useful magnitudes scale like 1/(image size).
const std::vector<double>& default_lambda_grid();

// SGD with momentum: v <- momentum*v + (grad + weight_decay*theta);
// theta <- theta - lr*v.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const std::vector<Param*>& params, double lr);

 private:
  double momentum_, weight_decay_;
  std::vector<Tensor> velocity_;
};

// lr * 0.5 * (1 + cos(pi * epoch / total)) — anneals towards 0 across the
// run without reaching it on the last epoch.
double cosine_lr(double lr0, int epoch, int total_epochs);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double entropy_reg = 0.0;
  double val_primary_acc = 0.0;
};

struct JointResult {
  std::unique_ptr<Network> mask_net;
  std::unique_ptr<Network> primary;
  std::vector<EpochStats> curve;
};

struct CloakResult {
  Tensor sigma;
  std::unique_ptr<Network> primary;
  std::vector<EpochStats> curve;
};

struct PlainResult {
  std::unique_ptr<Network> primary;
  std::vector<EpochStats> curve;
};

// Joint gradient descent on the mask network and the primary classifier:
// per batch, sample fresh noise, mix, classify, and take one simultaneous
// SGD step on both parameter sets. Training never sees secondary labels;
// the TrainView type does not carry them. The metrics CSV
// (epoch,loss,ce,reg,val_primary_acc) is appended per epoch when
// `metrics_csv` is non-empty.
JointResult train_joint(const TrainConfig& cfg, const TrainView& train, const TrainView& val,
                        const std::string& metrics_csv = "");

// Same loop with the input-independent baseline: sigma is one learned
// tensor (positively parameterized); mu stays 0 and b stays 1 during
// training.
CloakResult train_cloak(const TrainConfig& cfg, const TrainView& train, const TrainView& val,
                        const std::string& metrics_csv = "");

// No transform at all; the reference utilities come from this oracle.
PlainResult train_plain(const TrainConfig& cfg, const TrainView& train, const TrainView& val,
                        const std::string& metrics_csv = "");

struct AttackResult {
  std::unique_ptr<Network> attacker;
  std::vector<EpochStats> curve;  // val_primary_acc column holds secondary acc
  double test_secondary_acc = 0.0;
};

// Adversary training: fits a classifier on (x', z) pairs where x' is
// regenerated with fresh noise every batch from the frozen transform.
// Optimizer, schedule, and epochs equal the primary's.
AttackResult train_attacker(const TrainConfig& cfg, const TransformFn& transform,
                            const Dataset& train_with_z, const Dataset& val_with_z,
                            const Dataset& test_with_z, const std::string& metrics_csv = "");

struct RunRecord {
  std::string run_dir;
  std::string manifest_path;
  std::string run_id;
  double test_primary_acc = 0.0;
  std::vector<EpochStats> curve;
};

// One full training run: loads data, trains per cfg.method, measures test
// primary accuracy under the deployed transform, and persists checkpoints,
// per-epoch CSV, and the run manifest under out_root/run_id.
RunRecord execute_run(const TrainConfig& cfg);

// Adversary evaluation for a finished run directory: trains the attacker
// against the run's frozen transform and appends the secondary accuracy to
// the run manifest.
double attack_run(const std::string& run_dir);

// Mutual-information privacy metric for a finished run: estimates
// I(X;X')/H(X) on test samples and appends it to the run manifest.
double mi_run(const std::string& run_dir);

struct SweepResult {
  std::string dataset;
  std::string method;
  std::string sweep_dir;
  std::vector<TradeoffPoint> points;
  std::vector<std::string> manifest_paths;
  std::vector<std::string> errors;  // one entry per failed lambda
};

// Trains one run per lambda (ascending), optionally runs the attacker and
// the MI metric for each, and writes tradeoff.csv + sweep.json. A failing
// lambda is recorded and the sweep continues.
SweepResult run_sweep(const TrainConfig& base, const std::vector<double>& lambdas,
                      bool with_attack, bool with_mi);

// Rebuilds the deployed transform of a finished run from its checkpoints.
// Returned networks (if any) are owned by the caller via the out-params.
TransformFn load_run_transform(const std::string& run_dir,
                               std::unique_ptr<Network>& mask_holder, Tensor& sigma_holder);

}  // namespace ani
