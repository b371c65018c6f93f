#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dccl/losses.hpp"
#include "dccl/model.hpp"
#include "dccl/optim.hpp"
#include "dccl/perturb.hpp"

namespace dccl {

enum class Method { source_only, kl, mmd, dann, mask, mask_cl, dccl };
Method method_from_string(const std::string& s);
std::string to_string(Method m);
const std::vector<Method>& all_methods();

// Which auxiliary objectives stay active in a dccl run; disabling one zeroes
// its weight so the remaining composition matches the corresponding ablation
// row exactly.
struct AblationFlags {
  bool domain = true;
  bool consistency = true;
  bool contrast = true;
};

struct TrainConfig {
  int epochs = 8;
  int batch_size = 32;
  double lr = 1.5e-3;  // desk-scale peak; the paper preset uses 1e-5
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  uint64_t seed = 1;
  Method method = Method::dccl;

  ModelConfig model;
  PerturbConfig perturb;
  LossWeights weights;
  DomainLossVariant domain_variant = DomainLossVariant::alg1_label;
  AblationFlags ablation;

  double dann_gamma = 0.1;
  double match_weight = 0.25;  // kl / mmd matching term
  double mmd_bandwidth = 0.0;  // 0 = per-step median heuristic
  double mask_threshold = 5.0;

  // Optional per-step tap for diagnostics; not part of the file config.
  std::function<void(long step, const LossBreakdown&)> step_observer;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown losses;  // averaged over the epoch's steps
  double val_error = 0.0;
  double lr = 0.0;  // at the epoch's last step
  bool is_checkpoint = false;
};

struct MetricsRecord {
  std::vector<EpochRecord> epochs;
  int checkpoint_epoch = 0;
  double checkpoint_val_error = 1.0;
};

struct TrainResult {
  ModelParams best_params;   // snapshot at minimum source validation error
  ModelParams final_params;
  MetricsRecord metrics;
};

// Runs the configured method over paired corpora: per step one source and one
// target batch, crafted perturbations where the method calls for them, one
// optimizer step; per epoch a source-validation pass that drives checkpoint
// selection. Fixed seed means bit-identical trajectories.
TrainResult train(const CorpusSet& data, const TrainConfig& cfg);

TrainResult train_dccl(const CorpusSet& data, const TrainConfig& cfg);
TrainResult train_baseline(const CorpusSet& data, const TrainConfig& cfg);

// One line-delimited record per epoch.
void write_metrics_jsonl(const MetricsRecord& metrics, const std::string& path);

}  // namespace dccl
