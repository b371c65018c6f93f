#include "dccl/model.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace dccl {

void ModelConfig::validate() const {
  check_arg(vocab_size > kReservedTokens, "model: vocab_size too small");
  check_arg(max_len >= 1 && embed_dim >= 1 && hidden_dim >= 1 && proj_dim >= 1,
            "model: dimensions must be positive");
  check_arg(classes >= 2, "model: classes must be >= 2");
}

namespace {
constexpr double kEmbedInitRange = 0.08;

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double range,
                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-range, range);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Unit-gain range for an affine layer. A fixed small range shrinks
// activations by ~column-norm per layer, which leaves the projection output
// around 1e-3 at init; the cosine normalization then blows the contrastive
// gradients up to ~20x the task gradient and training stalls on the
// uniformity term. Fan-in scaling keeps every activation at the scale of the
// pooled embeddings instead.
double fan_in_range(Eigen::Index fan_in) {
  return std::sqrt(3.0 / static_cast<double>(fan_in));
}
}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(sub_seed(seed, "param-init"));
  ModelParams p;
  p.cfg = cfg;
  p.E = uniform_init(cfg.vocab_size, cfg.embed_dim, kEmbedInitRange, rng);
  p.W1 = uniform_init(cfg.embed_dim, cfg.hidden_dim, fan_in_range(cfg.embed_dim), rng);
  p.b1 = Mat::Zero(1, cfg.hidden_dim);
  p.W2 = uniform_init(cfg.hidden_dim, cfg.hidden_dim, fan_in_range(cfg.hidden_dim), rng);
  p.b2 = Mat::Zero(1, cfg.hidden_dim);
  p.Wy = uniform_init(cfg.hidden_dim, cfg.classes, fan_in_range(cfg.hidden_dim), rng);
  p.by = Mat::Zero(1, cfg.classes);
  p.Wd = uniform_init(cfg.hidden_dim, 2, fan_in_range(cfg.hidden_dim), rng);
  p.bd = Mat::Zero(1, 2);
  p.Wp1 = uniform_init(cfg.hidden_dim, cfg.proj_dim, fan_in_range(cfg.hidden_dim), rng);
  p.bp1 = Mat::Zero(1, cfg.proj_dim);
  p.Wp2 = uniform_init(cfg.proj_dim, cfg.proj_dim, fan_in_range(cfg.proj_dim), rng);
  p.bp2 = Mat::Zero(1, cfg.proj_dim);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  p.cfg = other.cfg;
  other.visit([&p](const std::string& name, const Mat& m) {
    p.visit([&](const std::string& n2, Mat& target) {
      if (n2 == name) target = Mat::Zero(m.rows(), m.cols());
    });
  });
  return p;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&ok](const std::string&, const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool ModelParams::equals(const ModelParams& other) const {
  bool same = cfg == other.cfg;
  if (!same) return false;
  visit([&](const std::string& name, const Mat& m) {
    other.visit([&](const std::string& n2, const Mat& o) {
      if (n2 == name) same = same && m.rows() == o.rows() && m.cols() == o.cols() && m == o;
    });
  });
  return same;
}

ParamVars add_params(ad::Graph& g, const ModelParams& params) {
  ParamVars v;
  v.E = g.leaf("E", params.E.rows(), params.E.cols());
  v.W1 = g.leaf("W1", params.W1.rows(), params.W1.cols());
  v.b1 = g.leaf("b1", params.b1.rows(), params.b1.cols());
  v.W2 = g.leaf("W2", params.W2.rows(), params.W2.cols());
  v.b2 = g.leaf("b2", params.b2.rows(), params.b2.cols());
  v.Wy = g.leaf("Wy", params.Wy.rows(), params.Wy.cols());
  v.by = g.leaf("by", params.by.rows(), params.by.cols());
  v.Wd = g.leaf("Wd", params.Wd.rows(), params.Wd.cols());
  v.bd = g.leaf("bd", params.bd.rows(), params.bd.cols());
  v.Wp1 = g.leaf("Wp1", params.Wp1.rows(), params.Wp1.cols());
  v.bp1 = g.leaf("bp1", params.bp1.rows(), params.bp1.cols());
  v.Wp2 = g.leaf("Wp2", params.Wp2.rows(), params.Wp2.cols());
  v.bp2 = g.leaf("bp2", params.bp2.rows(), params.bp2.cols());
  g.bind(v.E, params.E);
  g.bind(v.W1, params.W1);
  g.bind(v.b1, params.b1);
  g.bind(v.W2, params.W2);
  g.bind(v.b2, params.b2);
  g.bind(v.Wy, params.Wy);
  g.bind(v.by, params.by);
  g.bind(v.Wd, params.Wd);
  g.bind(v.bd, params.bd);
  g.bind(v.Wp1, params.Wp1);
  g.bind(v.bp1, params.bp1);
  g.bind(v.Wp2, params.Wp2);
  g.bind(v.bp2, params.bp2);
  return v;
}

ModelParams collect_grads(const ad::Graph& g, const ParamVars& vars,
                          const ModelParams& like) {
  ModelParams grads = ModelParams::zeros_like(like);
  vars.visit([&](const std::string& name, Var v) {
    grads.visit([&](const std::string& n2, Mat& target) {
      if (n2 == name) target = g.grad(v);
    });
  });
  return grads;
}

BatchConstants batch_constants(const TokenBatch& batch, const ModelConfig& cfg) {
  const Eigen::Index n = batch.size();
  const Eigen::Index len = batch.max_len();
  check_arg(len == cfg.max_len, "batch: sequence length " + std::to_string(len) +
                                    " does not match model max_len " +
                                    std::to_string(cfg.max_len));
  BatchConstants bc;
  bc.flat_tokens.reserve(static_cast<size_t>(n * len));
  bc.pad_rows = Mat::Zero(n * len, cfg.embed_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < len; ++t) {
      const int id = batch.tokens(i, t);
      check_arg(id >= 0 && id < cfg.vocab_size,
                "embed: token id " + std::to_string(id) + " out of vocabulary (" +
                    std::to_string(cfg.vocab_size) + ")");
      bc.flat_tokens.push_back(id);
      if (batch.pad_mask(i, t) != 0.0) bc.pad_rows.row(i * len + t).setOnes();
    }
  }
  return bc;
}

Mat pooling_matrix(const TokenBatch& batch) {
  const Eigen::Index n = batch.size();
  const Eigen::Index len = batch.max_len();
  Mat pooling = Mat::Zero(n, n * len);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double real = batch.pad_mask.row(i).sum();
    check_arg(real > 0.0,
              "encode: example " + std::to_string(i) + " has no non-pad tokens");
    for (Eigen::Index t = 0; t < len; ++t) {
      if (batch.pad_mask(i, t) != 0.0) pooling(i, i * len + t) = 1.0 / real;
    }
  }
  return pooling;
}

Var embed_tokens(ad::Graph& g, const ParamVars& p, const TokenBatch& batch,
                 const ModelConfig& cfg) {
  BatchConstants bc = batch_constants(batch, cfg);
  Var gathered = g.gather_rows(p.E, std::move(bc.flat_tokens));
  return g.cwise_mul(gathered, g.constant(std::move(bc.pad_rows), "pad_rows"));
}

Var encode(ad::Graph& g, const ParamVars& p, const TokenBatch& batch,
           const ModelConfig& cfg, Var embedded, Var delta) {
  Var x = embedded;
  if (delta.valid()) {
    BatchConstants bc = batch_constants(batch, cfg);
    Var masked_delta =
        g.cwise_mul(delta, g.constant(std::move(bc.pad_rows), "pad_rows"));
    x = g.add(x, masked_delta);
  }
  Var pooled = g.matmul(g.constant(pooling_matrix(batch), "mean_pool"), x);
  Var h1 = g.tanh(ad::affine(g, pooled, p.W1, p.b1));
  return g.tanh(ad::affine(g, h1, p.W2, p.b2));
}

Var task_logits(ad::Graph& g, const ParamVars& p, Var h) {
  return ad::affine(g, h, p.Wy, p.by);
}

Var domain_logits(ad::Graph& g, const ParamVars& p, Var h) {
  return ad::affine(g, h, p.Wd, p.bd);
}

Var project(ad::Graph& g, const ParamVars& p, Var h) {
  Var hidden = g.tanh(ad::affine(g, h, p.Wp1, p.bp1));
  return ad::affine(g, hidden, p.Wp2, p.bp2);
}

namespace {
Mat forward_values(const TokenBatch& batch, const ModelParams& params, const Mat* delta,
                   int which) {
  ad::Graph g;
  ParamVars p = add_params(g, params);
  Var embedded = embed_tokens(g, p, batch, params.cfg);
  if (which == 0) return g.evaluate(embedded);
  Var dv;
  if (delta != nullptr) {
    dv = g.constant(*delta, "delta");
  }
  Var h = encode(g, p, batch, params.cfg, embedded, dv);
  Var out = h;
  if (which == 2) out = task_logits(g, p, h);
  if (which == 3) out = domain_logits(g, p, h);
  if (which == 4) out = project(g, p, h);
  return g.evaluate(out);
}
}  // namespace

Mat embed_values(const TokenBatch& batch, const ModelParams& params) {
  return forward_values(batch, params, nullptr, 0);
}
Mat encode_values(const TokenBatch& batch, const ModelParams& params, const Mat* delta) {
  return forward_values(batch, params, delta, 1);
}
Mat task_logit_values(const TokenBatch& batch, const ModelParams& params,
                      const Mat* delta) {
  return forward_values(batch, params, delta, 2);
}
Mat domain_logit_values(const TokenBatch& batch, const ModelParams& params,
                        const Mat* delta) {
  return forward_values(batch, params, delta, 3);
}
Mat project_values(const TokenBatch& batch, const ModelParams& params,
                   const Mat* delta) {
  return forward_values(batch, params, delta, 4);
}

// ---- checkpoint --------------------------------------------------------------

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  check_runtime(out.good(), "checkpoint: cannot open " + path);
  out << "dccl-checkpoint v1\n";
  out << "vocab_size " << params.cfg.vocab_size << "\n";
  out << "max_len " << params.cfg.max_len << "\n";
  out << "embed_dim " << params.cfg.embed_dim << "\n";
  out << "hidden_dim " << params.cfg.hidden_dim << "\n";
  out << "proj_dim " << params.cfg.proj_dim << "\n";
  out << "classes " << params.cfg.classes << "\n";
  char buf[64];
  params.visit([&](const std::string& name, const Mat& m) {
    out << "array " << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
        out << buf << (j + 1 == m.cols() ? "" : " ");
      }
      out << "\n";
    }
  });
  check_runtime(out.good(), "checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  check_runtime(in.good(), "checkpoint: cannot open " + path);
  std::string line;
  std::getline(in, line);
  check_runtime(line == "dccl-checkpoint v1", "checkpoint: bad header in " + path);

  ModelConfig cfg;
  auto read_kv = [&](const std::string& key) {
    std::string k;
    int v = 0;
    in >> k >> v;
    check_runtime(k == key, "checkpoint: expected '" + key + "', got '" + k + "'");
    return v;
  };
  cfg.vocab_size = read_kv("vocab_size");
  cfg.max_len = read_kv("max_len");
  cfg.embed_dim = read_kv("embed_dim");
  cfg.hidden_dim = read_kv("hidden_dim");
  cfg.proj_dim = read_kv("proj_dim");
  cfg.classes = read_kv("classes");

  ModelParams params = ModelParams::init(cfg, 0);
  params.visit([&](const std::string& name, Mat& m) {
    std::string tag, got;
    Eigen::Index rows = 0, cols = 0;
    in >> tag >> got >> rows >> cols;
    check_runtime(tag == "array" && got == name,
                  "checkpoint: expected array '" + name + "', got '" + got + "'");
    check_runtime(rows == m.rows() && cols == m.cols(),
                  "checkpoint: shape mismatch for array '" + name + "'");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        check_runtime(static_cast<bool>(in >> m(i, j)),
                      "checkpoint: truncated values for array '" + name + "'");
      }
  });
  return params;
}

}  // namespace dccl
