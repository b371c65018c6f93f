#pragma once

#include <functional>
#include <random>

#include "dccl/model.hpp"

namespace dccl {

struct PerturbConfig {
  double sigma2 = 1e-4;   // init noise variance
  double epsilon = 5e-2;  // Frobenius bound, per example
  double eta = 5e-2;      // ascent step size
  int iterations = 1;

  void validate() const;
};

// Gaussian init with variance sigma2; rows of padding positions are zeroed.
Mat init_noise(const TokenBatch& batch, int embed_dim, double sigma2,
               std::mt19937_64& rng);

// Radial projection onto the Frobenius ball of radius eps (one example).
void project_eps_ball(Mat& delta, double eps);

// Same, applied to each rows_per_example block independently: every example
// owns its own budget.
void project_eps_ball_per_example(Mat& delta, Eigen::Index rows_per_example,
                                  double eps);

Eigen::VectorXd per_example_norms(const Mat& delta, Eigen::Index rows_per_example);

struct CraftDiagnostics {
  int zero_grad_skips = 0;   // iterations where an example's gradient vanished
  double loss_initial = 0.0; // objective at the projected init noise
  double loss_final = 0.0;
};

// Projected gradient ascent on an arbitrary objective of delta. `grad_fn`
// returns (objective value, d objective / d delta) at the given delta.
// Gradient normalization and projection are per example block; examples with
// an exactly zero gradient keep their current delta for that iteration.
using ObjectiveGrad = std::function<std::pair<double, Mat>(const Mat&)>;
Mat pgd_ascend(Mat delta0, const PerturbConfig& cfg, Eigen::Index rows_per_example,
               const Mat& pad_rows, const ObjectiveGrad& grad_fn,
               CraftDiagnostics* diag = nullptr);

// Ascends the domain cross-entropy so the result confuses the domain
// classifier. Parameters are read-only; nothing propagates into them.
Mat craft_domain_puzzle(const TokenBatch& batch, const ModelParams& params,
                        const PerturbConfig& cfg, std::mt19937_64& rng,
                        CraftDiagnostics* diag = nullptr);

// Same machinery aimed at the task label loss (label-gradient ascent).
Mat craft_task_adversary(const TokenBatch& batch, const ModelParams& params,
                         const PerturbConfig& cfg, std::mt19937_64& rng,
                         CraftDiagnostics* diag = nullptr);

// Ascends the symmetric KL between perturbed and clean task predictions.
Mat craft_virtual_adversary(const TokenBatch& batch, const ModelParams& params,
                            const PerturbConfig& cfg, std::mt19937_64& rng,
                            CraftDiagnostics* diag = nullptr);

}  // namespace dccl
