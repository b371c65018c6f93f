#include "dccl/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dccl/eval.hpp"
#include "json.hpp"

namespace dccl {

Method method_from_string(const std::string& s) {
  for (Method m : all_methods()) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("train: unknown method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::source_only: return "source_only";
    case Method::kl: return "kl";
    case Method::mmd: return "mmd";
    case Method::dann: return "dann";
    case Method::mask: return "mask";
    case Method::mask_cl: return "mask_cl";
    case Method::dccl: return "dccl";
  }
  return "?";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {
      Method::source_only, Method::kl,      Method::mmd, Method::dann,
      Method::mask,        Method::mask_cl, Method::dccl};
  return methods;
}

void TrainConfig::validate() const {
  check_arg(epochs >= 1, "train: epochs must be >= 1");
  check_arg(batch_size >= 2, "train: batch size must be >= 2");
  check_arg(lr > 0.0, "train: lr must be > 0");
  check_arg(warmup_fraction >= 0.0 && warmup_fraction < 1.0,
            "train: warmup fraction must be in [0,1)");
  check_arg(weight_decay >= 0.0, "train: weight decay must be >= 0");
  check_arg(match_weight >= 0.0 && mmd_bandwidth >= 0.0,
            "train: match weight and bandwidth must be >= 0");
  model.validate();
  perturb.validate();
  weights.validate();
}

namespace {

// Keeps the best parameters by source validation error; by construction this
// selector never sees anything target-related.
class CheckpointSelector {
 public:
  bool update(int epoch, double val_error, const ModelParams& params) {
    if (!have_ || val_error < best_error_) {
      have_ = true;
      best_error_ = val_error;
      best_epoch_ = epoch;
      snapshot_ = params;
      return true;
    }
    return false;
  }
  const ModelParams& best() const { return snapshot_; }
  int best_epoch() const { return best_epoch_; }
  double best_error() const { return best_error_; }

 private:
  bool have_ = false;
  double best_error_ = 1.0;
  int best_epoch_ = 0;
  ModelParams snapshot_;
};

struct StepOutcome {
  LossBreakdown losses;
  ModelParams grads;
};

LossWeights effective_weights(const TrainConfig& cfg) {
  LossWeights w = cfg.weights;
  if (!cfg.ablation.domain) w.alpha = 0.0;
  if (!cfg.ablation.consistency) w.beta = 0.0;
  if (!cfg.ablation.contrast) w.lambda_contrast = 0.0;
  return w;
}

std::vector<int> to_labels(const TokenBatch& batch) {
  const Eigen::VectorXi& y = batch.require_labels();
  return std::vector<int>(y.data(), y.data() + y.size());
}

StepOutcome source_only_step(const TrainConfig& cfg, const ModelParams& params,
                             const TokenBatch& src) {
  ad::Graph g;
  ParamVars p = add_params(g, params);
  Var embedded = embed_tokens(g, p, src, cfg.model);
  Var h = encode(g, p, src, cfg.model, embedded);
  Var loss = task_loss(g, task_logits(g, p, h), to_labels(src));
  StepOutcome out;
  out.losses.task = out.losses.total = g.evaluate(loss)(0, 0);
  g.backward(loss);
  out.grads = collect_grads(g, p, params);
  return out;
}

StepOutcome matching_step(const TrainConfig& cfg, const ModelParams& params,
                          const TokenBatch& src, const TokenBatch& tgt, bool use_mmd) {
  ad::Graph g;
  ParamVars p = add_params(g, params);
  Var emb_s = embed_tokens(g, p, src, cfg.model);
  Var emb_t = embed_tokens(g, p, tgt, cfg.model);
  Var h_s = encode(g, p, src, cfg.model, emb_s);
  Var h_t = encode(g, p, tgt, cfg.model, emb_t);
  Var task = task_loss(g, task_logits(g, p, h_s), to_labels(src));

  Var aux;
  if (use_mmd) {
    double bw = cfg.mmd_bandwidth;
    if (bw <= 0.0) {
      bw = median_pairwise_distance(g.evaluate(h_s), g.evaluate(h_t));
    }
    aux = mmd_loss(g, h_s, h_t, bw);
  } else {
    aux = kl_matching_loss(g, h_s, h_t);
  }
  Var total = g.add(task, g.scale(aux, cfg.match_weight));

  StepOutcome out;
  out.losses.total = g.evaluate(total)(0, 0);
  out.losses.task = g.value(task)(0, 0);
  out.losses.aux = cfg.match_weight * g.value(aux)(0, 0);
  g.backward(total);
  out.grads = collect_grads(g, p, params);
  return out;
}

StepOutcome dann_step(const TrainConfig& cfg, const ModelParams& params,
                      const TokenBatch& src, const TokenBatch& tgt, double progress) {
  const double lambda_p = dann_adaptation_rate(progress, cfg.dann_gamma);
  ad::Graph g;
  ParamVars p = add_params(g, params);
  DannLossVars dv = dann_step_loss_graph(g, p, src, tgt, cfg.model, lambda_p);

  StepOutcome out;
  out.losses.total = g.evaluate(dv.total)(0, 0);
  out.losses.task = g.value(dv.task)(0, 0);
  out.losses.aux = lambda_p * g.value(dv.domain)(0, 0);
  g.backward(dv.total);
  out.grads = collect_grads(g, p, params);
  return out;
}

StepOutcome mask_step(const TrainConfig& cfg, const ModelParams& params,
                      const TokenBatch& src, const TokenBatch& src_masked,
                      const TokenBatch* tgt, const TokenBatch* tgt_masked) {
  ad::Graph g;
  ParamVars p = add_params(g, params);
  Var emb_c = embed_tokens(g, p, src, cfg.model);
  Var emb_m = embed_tokens(g, p, src_masked, cfg.model);
  Var h_c = encode(g, p, src, cfg.model, emb_c);
  Var h_m = encode(g, p, src_masked, cfg.model, emb_m);
  const std::vector<int> labels = to_labels(src);
  Var ce_c = task_loss(g, task_logits(g, p, h_c), labels);
  Var ce_m = task_loss(g, task_logits(g, p, h_m), labels);
  // Mean cross-entropy over the clean + masked concatenation.
  Var task = g.scale(g.add(ce_c, ce_m), 0.5);
  Var total = task;

  Var contrast;
  if (tgt != nullptr) {
    Var emb_tc = embed_tokens(g, p, *tgt, cfg.model);
    Var emb_tm = embed_tokens(g, p, *tgt_masked, cfg.model);
    Var h_tc = encode(g, p, *tgt, cfg.model, emb_tc);
    Var h_tm = encode(g, p, *tgt_masked, cfg.model, emb_tm);
    Var con_s = contrastive_loss(g, project(g, p, h_c), project(g, p, h_m),
                                 cfg.weights.tau);
    Var con_t = contrastive_loss(g, project(g, p, h_tc), project(g, p, h_tm),
                                 cfg.weights.tau);
    contrast = g.scale(g.add(con_s, con_t), 0.5);
    total = g.add(task, g.scale(contrast, cfg.weights.lambda_contrast));
  }

  StepOutcome out;
  out.losses.total = g.evaluate(total)(0, 0);
  out.losses.task = g.value(task)(0, 0);
  if (contrast.valid()) out.losses.contrast = g.value(contrast)(0, 0);
  g.backward(total);
  out.grads = collect_grads(g, p, params);
  return out;
}

StepOutcome dccl_step(const TrainConfig& cfg, const ModelParams& params,
                      const TokenBatch& src, const TokenBatch& tgt,
                      std::mt19937_64& noise_rng) {
  const Mat delta_s = craft_domain_puzzle(src, params, cfg.perturb, noise_rng);
  const Mat delta_t = craft_domain_puzzle(tgt, params, cfg.perturb, noise_rng);

  ad::Graph g;
  ParamVars p = add_params(g, params);
  const LossWeights w = effective_weights(cfg);
  TotalLossVars tv = total_loss_graph(g, p, src, delta_s, tgt, delta_t, cfg.model, w,
                                      cfg.domain_variant);
  StepOutcome out;
  out.losses.total = g.evaluate(tv.total)(0, 0);
  out.losses.task = g.value(tv.task)(0, 0);
  out.losses.domain = g.value(tv.domain)(0, 0);
  out.losses.contrast = g.value(tv.contrast)(0, 0);
  out.losses.consist = g.value(tv.consist)(0, 0);
  g.backward(tv.total);
  out.grads = collect_grads(g, p, params);
  return out;
}

void check_breakdown_identity(const LossBreakdown& l, const LossWeights& w, long step) {
  const double recombined = l.task + w.alpha * l.domain +
                            w.lambda_contrast * l.contrast + w.beta * l.consist +
                            l.aux;
  check_runtime(std::abs(l.total - recombined) <= 1e-10,
                "train: loss breakdown identity violated at step " +
                    std::to_string(step));
}

}  // namespace

TrainResult train(const CorpusSet& data, const TrainConfig& cfg) {
  cfg.validate();
  const Method method = cfg.method;

  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  AdamWState opt = AdamWState::zeros_like(params);
  std::mt19937_64 noise_rng(sub_seed(cfg.seed, "noise"));

  const uint64_t src_seed = sub_seed(cfg.seed, "src-batches");
  const uint64_t tgt_seed = sub_seed(cfg.seed, "tgt-batches");
  Batcher src_batcher(data.source_train, cfg.batch_size, cfg.model.max_len, src_seed);
  Batcher tgt_batcher(data.target_train, cfg.batch_size, cfg.model.max_len, tgt_seed);

  // Masked corpora are precomputed once; their batchers reuse the clean
  // stream's seed so clean and masked batches stay aligned example for
  // example under the identical per-epoch shuffle.
  const bool uses_mask = method == Method::mask || method == Method::mask_cl;
  Corpus masked_source, masked_target;
  std::optional<Batcher> masked_src_batcher, masked_tgt_batcher;
  if (uses_mask) {
    const DomainTokenStats stats = DomainTokenStats::compute(
        data.source_train, data.target_train, cfg.model.vocab_size);
    masked_source = mask_corpus(data.source_train, stats, cfg.mask_threshold);
    masked_target = mask_corpus(data.target_train, stats, cfg.mask_threshold);
    masked_src_batcher.emplace(masked_source, cfg.batch_size, cfg.model.max_len,
                               src_seed);
    masked_tgt_batcher.emplace(masked_target, cfg.batch_size, cfg.model.max_len,
                               tgt_seed);
  }

  const int steps_per_epoch =
      std::min(src_batcher.batches_per_epoch(), tgt_batcher.batches_per_epoch());
  const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
  // Ablation flags only shape the dccl composition; non-dccl methods always
  // recombine with the configured weights (their unused components are zero).
  const LossWeights eff =
      method == Method::dccl ? effective_weights(cfg) : cfg.weights;

  CheckpointSelector selector;
  MetricsRecord metrics;
  long gstep = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto src_batches = src_batcher.epoch(epoch);
    const auto tgt_batches = tgt_batcher.epoch(epoch);
    std::vector<TokenBatch> msrc, mtgt;
    if (uses_mask) {
      msrc = masked_src_batcher->epoch(epoch);
      if (method == Method::mask_cl) mtgt = masked_tgt_batcher->epoch(epoch);
    }

    LossBreakdown sums;
    double last_lr = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s, ++gstep) {
      const TokenBatch& src = src_batches[static_cast<size_t>(s)];
      const TokenBatch& tgt = tgt_batches[static_cast<size_t>(s)];

      StepOutcome out;
      switch (method) {
        case Method::source_only:
          out = source_only_step(cfg, params, src);
          break;
        case Method::kl:
          out = matching_step(cfg, params, src, tgt, false);
          break;
        case Method::mmd:
          out = matching_step(cfg, params, src, tgt, true);
          break;
        case Method::dann:
          out = dann_step(cfg, params, src, tgt,
                          static_cast<double>(gstep) / static_cast<double>(total_steps));
          break;
        case Method::mask:
          out = mask_step(cfg, params, src, msrc[static_cast<size_t>(s)], nullptr,
                          nullptr);
          break;
        case Method::mask_cl:
          out = mask_step(cfg, params, src, msrc[static_cast<size_t>(s)], &tgt,
                          &mtgt[static_cast<size_t>(s)]);
          break;
        case Method::dccl:
          out = dccl_step(cfg, params, src, tgt, noise_rng);
          break;
      }

      check_runtime(std::isfinite(out.losses.total),
                    "train: non-finite total loss at step " + std::to_string(gstep));
      check_breakdown_identity(out.losses, eff, gstep);
      if (cfg.step_observer) cfg.step_observer(gstep, out.losses);

      last_lr = lr_schedule(gstep, total_steps, cfg.warmup_fraction, cfg.lr);
      adamw_step(params, out.grads, opt, last_lr, cfg.weight_decay);

      sums.task += out.losses.task;
      sums.domain += out.losses.domain;
      sums.contrast += out.losses.contrast;
      sums.consist += out.losses.consist;
      sums.aux += out.losses.aux;
      sums.total += out.losses.total;
    }

    const double val_error = 1.0 - accuracy(params, data.source_val);
    const bool is_ck = selector.update(epoch, val_error, params);

    EpochRecord rec;
    rec.epoch = epoch;
    const double n = static_cast<double>(steps_per_epoch);
    rec.losses.task = sums.task / n;
    rec.losses.domain = sums.domain / n;
    rec.losses.contrast = sums.contrast / n;
    rec.losses.consist = sums.consist / n;
    rec.losses.aux = sums.aux / n;
    rec.losses.total = sums.total / n;
    rec.val_error = val_error;
    rec.lr = last_lr;
    rec.is_checkpoint = is_ck;
    metrics.epochs.push_back(rec);
  }

  metrics.checkpoint_epoch = selector.best_epoch();
  metrics.checkpoint_val_error = selector.best_error();

  TrainResult result;
  result.best_params = selector.best();
  result.final_params = std::move(params);
  result.metrics = std::move(metrics);
  return result;
}

TrainResult train_dccl(const CorpusSet& data, const TrainConfig& cfg) {
  check_arg(cfg.method == Method::dccl, "train_dccl: method tag must be dccl");
  return train(data, cfg);
}

TrainResult train_baseline(const CorpusSet& data, const TrainConfig& cfg) {
  check_arg(cfg.method != Method::dccl, "train_baseline: use train_dccl for dccl");
  return train(data, cfg);
}

void write_metrics_jsonl(const MetricsRecord& metrics, const std::string& path) {
  std::ofstream out(path);
  check_runtime(out.good(), "metrics: cannot open " + path);
  for (const EpochRecord& r : metrics.epochs) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["task_ce"] = r.losses.task;
    j["domain"] = r.losses.domain;
    j["contrast"] = r.losses.contrast;
    j["consist"] = r.losses.consist;
    j["aux"] = r.losses.aux;
    j["total"] = r.losses.total;
    j["val_error"] = r.val_error;
    j["lr"] = r.lr;
    j["checkpoint"] = r.is_checkpoint;
    out << j.dump() << "\n";
  }
  check_runtime(out.good(), "metrics: write failed for " + path);
}

}  // namespace dccl
