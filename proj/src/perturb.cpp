#include "dccl/perturb.hpp"

#include <cmath>

#include "dccl/losses.hpp"

namespace dccl {

void PerturbConfig::validate() const {
  check_arg(sigma2 >= 0.0, "perturb: sigma2 must be >= 0");
  // epsilon == 0 is the degenerate zero-radius ball: delta is forced to zero.
  check_arg(epsilon >= 0.0, "perturb: epsilon must be >= 0");
  check_arg(eta > 0.0, "perturb: eta must be > 0");
  check_arg(iterations >= 0, "perturb: iteration count must be >= 0");
}

Mat init_noise(const TokenBatch& batch, int embed_dim, double sigma2,
               std::mt19937_64& rng) {
  check_arg(sigma2 >= 0.0, "init_noise: sigma2 must be >= 0");
  const Eigen::Index n = batch.size();
  const Eigen::Index len = batch.max_len();
  Mat delta = Mat::Zero(n * len, embed_dim);
  if (sigma2 == 0.0) return delta;
  std::normal_distribution<double> dist(0.0, std::sqrt(sigma2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < len; ++t) {
      if (batch.pad_mask(i, t) == 0.0) continue;
      for (Eigen::Index k = 0; k < embed_dim; ++k) delta(i * len + t, k) = dist(rng);
    }
  }
  return delta;
}

void project_eps_ball(Mat& delta, double eps) {
  check_arg(eps >= 0.0, "project_eps_ball: eps must be >= 0");
  if (eps == 0.0) {
    delta.setZero();
    return;
  }
  const double norm = delta.norm();
  if (norm > eps) delta *= eps / norm;
}

void project_eps_ball_per_example(Mat& delta, Eigen::Index rows_per_example,
                                  double eps) {
  check_arg(rows_per_example > 0 && delta.rows() % rows_per_example == 0,
            "project_eps_ball_per_example: rows not divisible into examples");
  const Eigen::Index n = delta.rows() / rows_per_example;
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat block = delta.middleRows(i * rows_per_example, rows_per_example);
    project_eps_ball(block, eps);
    delta.middleRows(i * rows_per_example, rows_per_example) = block;
  }
}

Eigen::VectorXd per_example_norms(const Mat& delta, Eigen::Index rows_per_example) {
  check_arg(rows_per_example > 0 && delta.rows() % rows_per_example == 0,
            "per_example_norms: rows not divisible into examples");
  const Eigen::Index n = delta.rows() / rows_per_example;
  Eigen::VectorXd norms(n);
  for (Eigen::Index i = 0; i < n; ++i)
    norms(i) = delta.middleRows(i * rows_per_example, rows_per_example).norm();
  return norms;
}

Mat pgd_ascend(Mat delta, const PerturbConfig& cfg, Eigen::Index rows_per_example,
               const Mat& pad_rows, const ObjectiveGrad& grad_fn,
               CraftDiagnostics* diag) {
  cfg.validate();
  check_arg(pad_rows.rows() == delta.rows() && pad_rows.cols() == delta.cols(),
            "pgd_ascend: pad mask shape mismatch");
  const Eigen::Index n = delta.rows() / rows_per_example;

  delta = delta.cwiseProduct(pad_rows);
  project_eps_ball_per_example(delta, rows_per_example, cfg.epsilon);
  if (cfg.epsilon == 0.0) {
    if (diag != nullptr) {
      diag->loss_initial = diag->loss_final = grad_fn(delta).first;
    }
    return delta;
  }

  auto check_budget = [&](const Mat& d) {
    const Eigen::VectorXd norms = per_example_norms(d, rows_per_example);
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
      if (norms(i) > cfg.epsilon * (1.0 + 1e-9)) {
        throw std::logic_error("pgd_ascend: per-example budget exceeded");
      }
    }
  };
  check_budget(delta);

  bool have_initial = false;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [value, grad] = grad_fn(delta);
    if (!have_initial && diag != nullptr) {
      diag->loss_initial = value;
      have_initial = true;
    }
    grad = grad.cwiseProduct(pad_rows);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gnorm = grad.middleRows(i * rows_per_example, rows_per_example).norm();
      if (gnorm == 0.0) {
        if (diag != nullptr) ++diag->zero_grad_skips;
        continue;  // leave this example's delta as is for the iterate
      }
      delta.middleRows(i * rows_per_example, rows_per_example) +=
          (cfg.eta / gnorm) * grad.middleRows(i * rows_per_example, rows_per_example);
    }
    delta = delta.cwiseProduct(pad_rows);
    project_eps_ball_per_example(delta, rows_per_example, cfg.epsilon);
    check_budget(delta);
  }
  if (diag != nullptr) {
    diag->loss_final = grad_fn(delta).first;
    if (!have_initial) diag->loss_initial = diag->loss_final;
  }
  return delta;
}

namespace {

enum class CraftTarget { domain_label, task_label, virtual_kl };

Mat craft(const TokenBatch& batch, const ModelParams& params, const PerturbConfig& cfg,
          std::mt19937_64& rng, CraftTarget target, CraftDiagnostics* diag) {
  const ModelConfig& mc = params.cfg;
  BatchConstants bc = batch_constants(batch, mc);
  Mat delta0 = init_noise(batch, mc.embed_dim, cfg.sigma2, rng);

  ad::Graph g;
  ParamVars p = add_params(g, params);
  Var dleaf = g.leaf("delta", batch.size() * batch.max_len(), mc.embed_dim);
  Var embedded = embed_tokens(g, p, batch, mc);
  Var h = encode(g, p, batch, mc, embedded, dleaf);
  Var loss;
  switch (target) {
    case CraftTarget::domain_label: {
      std::vector<int> d(static_cast<size_t>(batch.size()), batch.domain);
      loss = ad::cross_entropy(g, domain_logits(g, p, h), d);
      break;
    }
    case CraftTarget::task_label: {
      const Eigen::VectorXi& y = batch.require_labels();
      std::vector<int> labels(y.data(), y.data() + y.size());
      loss = ad::cross_entropy(g, task_logits(g, p, h), labels);
      break;
    }
    case CraftTarget::virtual_kl: {
      Var h_clean = encode(g, p, batch, mc, embedded);
      loss = symmetric_kl_rows(g, task_logits(g, p, h), task_logits(g, p, h_clean));
      break;
    }
  }

  auto grad_fn = [&](const Mat& d) -> std::pair<double, Mat> {
    g.bind(dleaf, d);
    const double value = g.evaluate(loss)(0, 0);
    g.backward(loss);
    return {value, g.grad(dleaf)};
  };
  return pgd_ascend(std::move(delta0), cfg, batch.max_len(), bc.pad_rows, grad_fn, diag);
}

}  // namespace

Mat craft_domain_puzzle(const TokenBatch& batch, const ModelParams& params,
                        const PerturbConfig& cfg, std::mt19937_64& rng,
                        CraftDiagnostics* diag) {
  return craft(batch, params, cfg, rng, CraftTarget::domain_label, diag);
}

Mat craft_task_adversary(const TokenBatch& batch, const ModelParams& params,
                         const PerturbConfig& cfg, std::mt19937_64& rng,
                         CraftDiagnostics* diag) {
  return craft(batch, params, cfg, rng, CraftTarget::task_label, diag);
}

Mat craft_virtual_adversary(const TokenBatch& batch, const ModelParams& params,
                            const PerturbConfig& cfg, std::mt19937_64& rng,
                            CraftDiagnostics* diag) {
  return craft(batch, params, cfg, rng, CraftTarget::virtual_kl, diag);
}

}  // namespace dccl
