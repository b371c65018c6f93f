#include "dccl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dccl {

namespace {
constexpr double kProbFloor = 1e-12;
}

DomainLossVariant domain_variant_from_string(const std::string& s) {
  if (s == "alg1_label") return DomainLossVariant::alg1_label;
  if (s == "eq6_match") return DomainLossVariant::eq6_match;
  throw std::invalid_argument("domain_loss: unknown variant '" + s + "'");
}

std::string to_string(DomainLossVariant v) {
  return v == DomainLossVariant::alg1_label ? "alg1_label" : "eq6_match";
}

void LossWeights::validate() const {
  check_arg(tau > 0.0, "weights: tau must be > 0");
  check_arg(alpha_adv >= 0.0 && alpha >= 0.0 && lambda_contrast >= 0.0 && beta >= 0.0,
            "weights: loss weights must be >= 0");
}

Var symmetric_kl_rows(ad::Graph& g, Var logits_p, Var logits_q) {
  check_arg(g.rows(logits_p) == g.rows(logits_q) && g.cols(logits_p) == g.cols(logits_q),
            "symmetric_kl: logit shapes differ");
  const double n = static_cast<double>(g.rows(logits_p));
  Var p = g.softmax_rows(logits_p);
  Var q = g.softmax_rows(logits_q);
  Var lp = g.log(g.cwise_max(p, kProbFloor));
  Var lq = g.log(g.cwise_max(q, kProbFloor));
  Var diff = g.sub(lp, lq);
  Var kl_pq = g.sum(g.cwise_mul(p, diff));
  Var kl_qp = g.sum(g.cwise_mul(q, g.scale(diff, -1.0)));
  return g.scale(g.add(kl_pq, kl_qp), 0.5 / n);
}

Var task_loss(ad::Graph& g, Var logits, const std::vector<int>& labels) {
  return ad::cross_entropy(g, logits, labels);
}

Var domain_loss(ad::Graph& g, Var clean_logits, Var pert_logits, int domain,
                double alpha_adv, DomainLossVariant variant) {
  check_arg(domain == 0 || domain == 1, "domain_loss: domain must be 0 or 1");
  const std::vector<int> d(static_cast<size_t>(g.rows(clean_logits)), domain);
  Var clean_ce = ad::cross_entropy(g, clean_logits, d);
  Var second;
  switch (variant) {
    case DomainLossVariant::alg1_label:
      second = ad::cross_entropy(g, pert_logits, d);
      break;
    case DomainLossVariant::eq6_match:
      second = symmetric_kl_rows(g, pert_logits, clean_logits);
      break;
  }
  return g.add(clean_ce, g.scale(second, alpha_adv));
}

Var contrastive_loss(ad::Graph& g, Var z, Var z_prime, double tau) {
  check_arg(tau > 0.0, "contrastive_loss: tau must be > 0");
  const Eigen::Index n = g.rows(z);
  check_arg(n >= 2, "contrastive_loss: need at least 2 rows, the denominator is "
                    "empty otherwise");
  check_arg(g.rows(z_prime) == n && g.cols(z_prime) == g.cols(z),
            "contrastive_loss: z and z' shapes differ");

  Var pos = ad::cosine_rows(g, z, z_prime);       // N x 1
  Var sims = ad::cosine_matrix(g, z, z);          // N x N, clean rows only
  Var expd = g.exp(g.scale(sims, 1.0 / tau));
  Mat off_diag = Mat::Ones(n, n) - Mat::Identity(n, n);
  Var denom = g.row_sum(g.cwise_mul(expd, g.constant(std::move(off_diag), "k!=i")));
  Var per_anchor = g.sub(g.scale(pos, 1.0 / tau), g.log(denom));
  return g.scale(g.sum(per_anchor), -1.0 / static_cast<double>(n));
}

Var consistency_loss(ad::Graph& g, Var clean_logits, Var pert_logits) {
  return symmetric_kl_rows(g, clean_logits, pert_logits);
}

Var kl_matching_loss(ad::Graph& g, Var h_source, Var h_target) {
  check_arg(g.cols(h_source) == g.cols(h_target),
            "kl_matching_loss: feature dims differ");
  Var mean_s = g.scale(g.col_sum(h_source), 1.0 / static_cast<double>(g.rows(h_source)));
  Var mean_t = g.scale(g.col_sum(h_target), 1.0 / static_cast<double>(g.rows(h_target)));
  return symmetric_kl_rows(g, mean_s, mean_t);
}

namespace {

// ||a_i - b_j||^2 as an NxM graph expression.
Var pairwise_sq_dists(ad::Graph& g, Var a, Var b) {
  Var a2 = g.row_sum(g.cwise_mul(a, a));  // N x 1
  Var b2 = g.row_sum(g.cwise_mul(b, b));  // M x 1
  Var cross = g.matmul(a, g.transpose(b));
  Var d2 = g.add(g.bcast_col(a2, g.rows(b)), g.bcast_row(g.transpose(b2), g.rows(a)));
  return g.sub(d2, g.scale(cross, 2.0));
}

Var kernel_mean(ad::Graph& g, Var a, Var b, double bandwidth) {
  Var d2 = pairwise_sq_dists(g, a, b);
  Var k = g.exp(g.scale(d2, -1.0 / (2.0 * bandwidth * bandwidth)));
  return ad::mean(g, k);
}

}  // namespace

Var mmd_loss(ad::Graph& g, Var h_source, Var h_target, double bandwidth) {
  check_arg(bandwidth > 0.0, "mmd_loss: bandwidth must be > 0");
  Var kss = kernel_mean(g, h_source, h_source, bandwidth);
  Var ktt = kernel_mean(g, h_target, h_target, bandwidth);
  Var kst = kernel_mean(g, h_source, h_target, bandwidth);
  return g.sub(g.add(kss, ktt), g.scale(kst, 2.0));
}

double median_pairwise_distance(const Mat& a, const Mat& b) {
  Mat stacked(a.rows() + b.rows(), a.cols());
  stacked << a, b;
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(stacked.rows() * (stacked.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < stacked.rows(); ++i)
    for (Eigen::Index j = i + 1; j < stacked.rows(); ++j)
      dists.push_back((stacked.row(i) - stacked.row(j)).norm());
  if (dists.empty()) return 1e-6;
  auto mid = dists.begin() + static_cast<long>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return std::max(*mid, 1e-6);
}

double dann_adaptation_rate(double progress, double gamma) {
  check_arg(progress >= 0.0 && progress <= 1.0,
            "dann: progress must be in [0,1]");
  return 2.0 / (1.0 + std::exp(-gamma * progress)) - 1.0;
}

BatchForward forward_clean_perturbed(ad::Graph& g, const ParamVars& p,
                                     const TokenBatch& batch, const ModelConfig& cfg,
                                     const Mat& delta) {
  BatchForward f;
  Var embedded = embed_tokens(g, p, batch, cfg);
  f.h_clean = encode(g, p, batch, cfg, embedded);
  f.h_pert = encode(g, p, batch, cfg, embedded, g.constant(delta, "delta"));
  f.task_clean = task_logits(g, p, f.h_clean);
  f.task_pert = task_logits(g, p, f.h_pert);
  f.dom_clean = domain_logits(g, p, f.h_clean);
  f.dom_pert = domain_logits(g, p, f.h_pert);
  f.z_clean = project(g, p, f.h_clean);
  f.z_pert = project(g, p, f.h_pert);
  return f;
}

TotalLossVars total_loss_graph(ad::Graph& g, const ParamVars& p,
                               const TokenBatch& source, const Mat& delta_source,
                               const TokenBatch& target, const Mat& delta_target,
                               const ModelConfig& cfg, const LossWeights& w,
                               DomainLossVariant variant) {
  w.validate();
  check_arg(source.domain == 0 && target.domain == 1,
            "total_loss: expected one source and one target batch");

  BatchForward fs = forward_clean_perturbed(g, p, source, cfg, delta_source);
  BatchForward ft = forward_clean_perturbed(g, p, target, cfg, delta_target);

  const Eigen::VectorXi& y = source.require_labels();
  std::vector<int> labels(y.data(), y.data() + y.size());

  TotalLossVars out;
  out.task = task_loss(g, fs.task_clean, labels);

  Var dom_s = domain_loss(g, fs.dom_clean, fs.dom_pert, 0, w.alpha_adv, variant);
  Var dom_t = domain_loss(g, ft.dom_clean, ft.dom_pert, 1, w.alpha_adv, variant);
  out.domain = g.scale(g.add(dom_s, dom_t), 0.5);

  Var con_s = contrastive_loss(g, fs.z_clean, fs.z_pert, w.tau);
  Var con_t = contrastive_loss(g, ft.z_clean, ft.z_pert, w.tau);
  out.contrast = g.scale(g.add(con_s, con_t), 0.5);

  Var cons_s = consistency_loss(g, fs.task_clean, fs.task_pert);
  Var cons_t = consistency_loss(g, ft.task_clean, ft.task_pert);
  out.consist = g.scale(g.add(cons_s, cons_t), 0.5);

  Var total = out.task;
  total = g.add(total, g.scale(out.domain, w.alpha));
  total = g.add(total, g.scale(out.contrast, w.lambda_contrast));
  total = g.add(total, g.scale(out.consist, w.beta));
  out.total = total;
  return out;
}

Var adversarial_loss_with_delta(ad::Graph& g, const ParamVars& p,
                                const TokenBatch& batch, const ModelConfig& cfg,
                                const Mat& delta, AdvMode mode) {
  Var embedded = embed_tokens(g, p, batch, cfg);
  Var h_pert = encode(g, p, batch, cfg, embedded, g.constant(delta, "delta"));
  if (mode == AdvMode::standard) {
    const Eigen::VectorXi& y = batch.require_labels();
    std::vector<int> labels(y.data(), y.data() + y.size());
    return task_loss(g, task_logits(g, p, h_pert), labels);
  }
  Var h_clean = encode(g, p, batch, cfg, embedded);
  return symmetric_kl_rows(g, task_logits(g, p, h_pert), task_logits(g, p, h_clean));
}

double adversarial_training_loss(const TokenBatch& batch, const ModelParams& params,
                                 const PerturbConfig& cfg, AdvMode mode,
                                 std::mt19937_64& rng) {
  Mat delta;
  if (cfg.epsilon == 0.0) {
    delta = Mat::Zero(batch.size() * batch.max_len(), params.cfg.embed_dim);
  } else if (mode == AdvMode::standard) {
    delta = craft_task_adversary(batch, params, cfg, rng);
  } else {
    delta = craft_virtual_adversary(batch, params, cfg, rng);
  }
  ad::Graph g;
  ParamVars p = add_params(g, params);
  Var loss = adversarial_loss_with_delta(g, p, batch, params.cfg, delta, mode);
  return g.evaluate(loss)(0, 0);
}

DannLossVars dann_step_loss_graph(ad::Graph& g, const ParamVars& p,
                                  const TokenBatch& source, const TokenBatch& target,
                                  const ModelConfig& cfg, double lambda_p) {
  check_arg(source.domain == 0 && target.domain == 1,
            "dann: expected one source and one target batch");
  Var emb_s = embed_tokens(g, p, source, cfg);
  Var emb_t = embed_tokens(g, p, target, cfg);
  Var h_s = encode(g, p, source, cfg, emb_s);
  Var h_t = encode(g, p, target, cfg, emb_t);

  const Eigen::VectorXi& y = source.require_labels();
  std::vector<int> labels(y.data(), y.data() + y.size());
  DannLossVars out;
  out.task = task_loss(g, task_logits(g, p, h_s), labels);

  // Reversal boundary sits between the encoder and the domain head.
  Var dom_s = ad::cross_entropy(
      g, domain_logits(g, p, g.grad_reverse(h_s, 1.0)),
      std::vector<int>(static_cast<size_t>(source.size()), 0));
  Var dom_t = ad::cross_entropy(
      g, domain_logits(g, p, g.grad_reverse(h_t, 1.0)),
      std::vector<int>(static_cast<size_t>(target.size()), 1));
  out.domain = g.scale(g.add(dom_s, dom_t), 0.5);
  out.total = g.add(out.task, g.scale(out.domain, lambda_p));
  return out;
}

}  // namespace dccl
