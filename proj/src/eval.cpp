#include "dccl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace dccl {

double accuracy(const ModelParams& params, const Corpus& corpus, int batch_size) {
  check_arg(!corpus.empty(), "accuracy: empty corpus");
  check_arg(corpus.labeled(), "accuracy: corpus is not fully labeled");
  long correct = 0;
  for (const TokenBatch& batch :
       sequential_batches(corpus, batch_size, params.cfg.max_len)) {
    const Mat logits = task_logit_values(batch, params);
    const Eigen::VectorXi& y = batch.require_labels();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < logits.cols(); ++c) {
        if (logits(i, c) > logits(i, best)) best = c;  // ties keep the lowest id
      }
      if (best == y(i)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

Mat encode_corpus(const ModelParams& params, const Corpus& corpus, int batch_size) {
  check_arg(!corpus.empty(), "encode_corpus: empty corpus");
  Mat features(static_cast<Eigen::Index>(corpus.size()), params.cfg.hidden_dim);
  Eigen::Index at = 0;
  for (const TokenBatch& batch :
       sequential_batches(corpus, batch_size, params.cfg.max_len)) {
    const Mat h = encode_values(batch, params);
    features.middleRows(at, h.rows()) = h;
    at += h.rows();
  }
  return features;
}

// ---- linear probe ------------------------------------------------------------

LinearProbe train_hinge_probe(const Mat& x, const Eigen::VectorXi& labels01,
                              double reg, int epochs) {
  check_arg(x.rows() == labels01.size() && x.rows() > 0, "probe: bad training set");
  check_arg(reg > 0.0 && epochs > 0, "probe: reg and epochs must be positive");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();

  Mat xa(n, d + 1);  // constant bias feature
  xa.leftCols(d) = x;
  xa.col(d).setOnes();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels01(i) == 0 ? -1.0 : 1.0;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  const double radius = 1.0 / std::sqrt(reg);
  for (int t = 1; t <= epochs; ++t) {
    Eigen::VectorXd margins = y.cwiseProduct(xa * w);
    Eigen::VectorXd hinge_grad = Eigen::VectorXd::Zero(d + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (margins(i) < 1.0) hinge_grad -= y(i) * xa.row(i).transpose();
    }
    const Eigen::VectorXd grad = reg * w + hinge_grad / static_cast<double>(n);
    w -= grad / (reg * static_cast<double>(t));
    const double norm = w.norm();
    if (norm > radius) w *= radius / norm;
  }
  return LinearProbe{std::move(w)};
}

double probe_error(const LinearProbe& probe, const Mat& x,
                   const Eigen::VectorXi& labels01) {
  check_arg(x.rows() == labels01.size() && x.rows() > 0, "probe: bad test set");
  check_arg(x.cols() + 1 == probe.w.size(), "probe: feature width mismatch");
  long wrong = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double score = x.row(i).dot(probe.w.head(x.cols())) + probe.w(x.cols());
    const int pred = score > 0.0 ? 1 : 0;
    if (pred != labels01(i)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(x.rows());
}

namespace {
constexpr int kADistanceCap = 2000;

std::vector<Eigen::Index> split_indices(Eigen::Index n, uint64_t seed, uint64_t salt) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(sub_seed(seed, "a-distance-split", salt));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}
}  // namespace

ADistanceReport a_distance(const Mat& source_features, const Mat& target_features,
                           uint64_t split_seed) {
  check_arg(source_features.rows() >= 2 && target_features.rows() >= 2,
            "a_distance: need at least 2 examples per domain");
  check_arg(source_features.cols() == target_features.cols(),
            "a_distance: feature dims differ");

  const Eigen::Index ns =
      std::min<Eigen::Index>(kADistanceCap, source_features.rows());
  const Eigen::Index nt =
      std::min<Eigen::Index>(kADistanceCap, target_features.rows());
  const auto src_idx = split_indices(source_features.rows(), split_seed, 0);
  const auto tgt_idx = split_indices(target_features.rows(), split_seed, 1);

  const Eigen::Index d = source_features.cols();
  auto take = [&](const Mat& feats, const std::vector<Eigen::Index>& idx,
                  Eigen::Index begin, Eigen::Index count) {
    Mat out(count, d);
    for (Eigen::Index i = 0; i < count; ++i)
      out.row(i) = feats.row(idx[static_cast<size_t>(begin + i)]);
    return out;
  };

  const Eigen::Index ns_tr = ns / 2, nt_tr = nt / 2;
  Mat x_train(ns_tr + nt_tr, d);
  x_train << take(source_features, src_idx, 0, ns_tr),
      take(target_features, tgt_idx, 0, nt_tr);
  Eigen::VectorXi y_train(ns_tr + nt_tr);
  y_train.head(ns_tr).setZero();
  y_train.tail(nt_tr).setOnes();

  const Eigen::Index ns_te = ns - ns_tr, nt_te = nt - nt_tr;
  Mat x_test(ns_te + nt_te, d);
  x_test << take(source_features, src_idx, ns_tr, ns_te),
      take(target_features, tgt_idx, nt_tr, nt_te);
  Eigen::VectorXi y_test(ns_te + nt_te);
  y_test.head(ns_te).setZero();
  y_test.tail(nt_te).setOnes();

  const LinearProbe probe = train_hinge_probe(x_train, y_train);
  ADistanceReport report;
  report.domain_error = probe_error(probe, x_test, y_test);
  report.d_a = a_distance_from_error(report.domain_error);
  report.n_source = static_cast<int>(ns);
  report.n_target = static_cast<int>(nt);
  report.split_seed = split_seed;
  return report;
}

// ---- embedding dump ------------------------------------------------------------

void dump_embeddings(const ModelParams& params, const Corpus& corpus,
                     const std::string& path) {
  std::ofstream out(path);
  check_runtime(out.good(), "dump_embeddings: cannot open " + path);
  const int h_dim = params.cfg.hidden_dim;
  for (int k = 0; k < h_dim; ++k) out << "h" << k << "\t";
  out << "y\td\n";

  const Mat features = encode_corpus(params, corpus);
  char buf[64];
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index k = 0; k < features.cols(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", features(i, k));
      out << buf << "\t";
    }
    const Example& ex = corpus.examples[static_cast<size_t>(i)];
    if (ex.y.has_value()) out << *ex.y;
    out << "\t" << ex.d << "\n";
  }
  check_runtime(out.good(), "dump_embeddings: write failed for " + path);
}

// ---- paired t statistics ---------------------------------------------------------

namespace {

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double sample_std(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double student_t_two_tailed_p(double t, int dof) {
  check_arg(dof >= 1, "t-test: dof must be >= 1");
  const double df = static_cast<double>(dof);
  return betai(df / 2.0, 0.5, df / (df + t * t));
}

RunSummary summarize_runs(const std::vector<double>& a, const std::vector<double>& b) {
  check_arg(a.size() == b.size(), "summarize_runs: score lists differ in length");
  check_arg(a.size() >= 2, "summarize_runs: need at least 2 paired runs");
  RunSummary s;
  s.n = static_cast<int>(a.size());
  const double n = static_cast<double>(s.n);
  s.mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  s.mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  s.std_a = sample_std(a, s.mean_a);
  s.std_b = sample_std(b, s.mean_b);

  std::vector<double> diffs(a.size());
  for (size_t i = 0; i < a.size(); ++i) diffs[i] = b[i] - a[i];
  s.mean_diff = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
  const double sd = sample_std(diffs, s.mean_diff);
  if (sd == 0.0) {
    s.degenerate = true;
    s.t_stat = 0.0;
    s.p_value = s.mean_diff != 0.0 ? 0.0 : 1.0;
    return s;
  }
  s.t_stat = s.mean_diff / (sd / std::sqrt(n));
  s.p_value = student_t_two_tailed_p(s.t_stat, s.n - 1);
  return s;
}

}  // namespace dccl
