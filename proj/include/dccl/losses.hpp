#pragma once

#include <random>
#include <string>

#include "dccl/model.hpp"
#include "dccl/perturb.hpp"

namespace dccl {

// Second term of the domain loss: Algorithm-style label target, or matching
// the perturbed predictions against the clean ones.
enum class DomainLossVariant { alg1_label, eq6_match };
DomainLossVariant domain_variant_from_string(const std::string& s);
std::string to_string(DomainLossVariant v);

struct LossWeights {
  double alpha_adv = 1.0;        // perturbed term inside the domain loss
  double alpha = 1e-3;           // domain loss
  double lambda_contrast = 3e-2; // contrastive loss
  double beta = 5.0;             // consistency loss
  double tau = 0.5;              // contrastive temperature

  void validate() const;
};

// Scalar components of one optimization step. The recombination identity
// total == task + alpha*domain + lambda*contrast + beta*consist (+ aux term)
// is asserted after every training step.
struct LossBreakdown {
  double task = 0.0;
  double domain = 0.0;
  double contrast = 0.0;
  double consist = 0.0;
  double aux = 0.0;  // baseline-specific matching term, weight included
  double total = 0.0;
};

// ---- graph builders --------------------------------------------------------

// Mean over rows of 0.5*(KL(p||q) + KL(q||p)) on row-softmaxed logits, with
// probabilities floored at 1e-12 inside the logs.
Var symmetric_kl_rows(ad::Graph& g, Var logits_p, Var logits_q);

Var task_loss(ad::Graph& g, Var logits, const std::vector<int>& labels);

Var domain_loss(ad::Graph& g, Var clean_logits, Var pert_logits, int domain,
                double alpha_adv, DomainLossVariant variant);

// InfoNCE over one same-domain batch. Positives pair each row of z with the
// matching row of z_prime; the denominator ranges over the other clean rows
// of z only (the positive pair is excluded).
Var contrastive_loss(ad::Graph& g, Var z, Var z_prime, double tau);

Var consistency_loss(ad::Graph& g, Var clean_logits, Var pert_logits);

// Symmetric KL between softmax-normalized mean representations.
Var kl_matching_loss(ad::Graph& g, Var h_source, Var h_target);

// Biased V-statistic MMD^2 with a Gaussian kernel of the given bandwidth.
Var mmd_loss(ad::Graph& g, Var h_source, Var h_target, double bandwidth);

// Median pairwise distance over the stacked rows, floored at 1e-6.
double median_pairwise_distance(const Mat& a, const Mat& b);

double dann_adaptation_rate(double progress, double gamma);

// ---- batch-level assembly ----------------------------------------------------

// Clean and perturbed forward passes of one batch in one graph; the embedding
// lookup is shared between the two paths.
struct BatchForward {
  Var h_clean, h_pert;
  Var task_clean, task_pert;
  Var dom_clean, dom_pert;
  Var z_clean, z_pert;
};

BatchForward forward_clean_perturbed(ad::Graph& g, const ParamVars& p,
                                     const TokenBatch& batch, const ModelConfig& cfg,
                                     const Mat& delta);

struct TotalLossVars {
  Var task, domain, contrast, consist, total;
};

// Weighted objective over one source and one target batch; the auxiliary
// terms are computed per batch and averaged over the two domains. Weights of
// exactly zero still produce the component value for the records.
TotalLossVars total_loss_graph(ad::Graph& g, const ParamVars& p,
                               const TokenBatch& source, const Mat& delta_source,
                               const TokenBatch& target, const Mat& delta_target,
                               const ModelConfig& cfg, const LossWeights& w,
                               DomainLossVariant variant);

// ---- single-domain adversarial training (background objectives) -------------

enum class AdvMode { standard, virtual_smoothing };

// Loss with a frozen, already-crafted perturbation.
Var adversarial_loss_with_delta(ad::Graph& g, const ParamVars& p,
                                const TokenBatch& batch, const ModelConfig& cfg,
                                const Mat& delta, AdvMode mode);

// Crafts the perturbation (label-gradient ascent for standard, prediction
// divergence for virtual), then evaluates the loss. epsilon == 0 degenerates
// to the clean objective.
double adversarial_training_loss(const TokenBatch& batch, const ModelParams& params,
                                 const PerturbConfig& cfg, AdvMode mode,
                                 std::mt19937_64& rng);

// DANN step objective: task cross-entropy plus the adaptation-rate-weighted
// domain term through a gradient-reversal boundary.
struct DannLossVars {
  Var task, domain, total;  // total = task + lambda_p * domain
};
DannLossVars dann_step_loss_graph(ad::Graph& g, const ParamVars& p,
                                  const TokenBatch& source, const TokenBatch& target,
                                  const ModelConfig& cfg, double lambda_p);

}  // namespace dccl
