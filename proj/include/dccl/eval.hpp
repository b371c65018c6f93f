#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dccl/model.hpp"

namespace dccl {

// Fraction of correct argmax predictions; ties break toward the lowest
// label id so reruns agree bit for bit.
double accuracy(const ModelParams& params, const Corpus& corpus, int batch_size = 64);

// Encoder representations for a whole corpus, one row per example.
Mat encode_corpus(const ModelParams& params, const Corpus& corpus, int batch_size = 64);

// ---- proxy A-distance --------------------------------------------------------

struct ADistanceReport {
  double domain_error = 0.0;  // test error of the linear probe
  double d_a = 0.0;           // 2 * (1 - 2 * domain_error), reported raw
  int n_source = 0;
  int n_target = 0;
  uint64_t split_seed = 0;
};

inline double a_distance_from_error(double eps) { return 2.0 * (1.0 - 2.0 * eps); }

// Trains a hinge-loss linear probe (l2-regularized projected subgradient
// descent) on half of the frozen representations to separate the domains and
// reports the test-half error. Uses min(2000, available) rows per domain.
ADistanceReport a_distance(const Mat& source_features, const Mat& target_features,
                           uint64_t split_seed);

// ---- linear probe (shared by a_distance and the corpus transfer checks) ------

struct LinearProbe {
  Eigen::VectorXd w;  // last entry acts on the constant bias feature
};

LinearProbe train_hinge_probe(const Mat& x, const Eigen::VectorXi& labels01,
                              double reg = 1e-3, int epochs = 200);
double probe_error(const LinearProbe& probe, const Mat& x,
                   const Eigen::VectorXi& labels01);

// ---- embedding dump -----------------------------------------------------------
// Tab-separated, one row per example: h_0..h_{H-1}, y (empty when absent), d.
// Values carry 17 significant digits so parsing recovers them exactly.

void dump_embeddings(const ModelParams& params, const Corpus& corpus,
                     const std::string& path);

// ---- multi-seed statistics ----------------------------------------------------

struct RunSummary {
  int n = 0;
  double mean_a = 0.0, std_a = 0.0;
  double mean_b = 0.0, std_b = 0.0;
  double mean_diff = 0.0;  // b - a
  double t_stat = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // zero-variance differences
};

// Paired two-tailed Student t-test of b against a (positionally paired).
RunSummary summarize_runs(const std::vector<double>& a, const std::vector<double>& b);

double student_t_two_tailed_p(double t, int dof);

}  // namespace dccl
