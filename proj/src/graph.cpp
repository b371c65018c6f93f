#include "dccl/graph.hpp"

#include <cmath>
#include <utility>

namespace dccl::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kCwiseMul: return "cwise_mul";
    case Op::kScale: return "scale";
    case Op::kCwiseMaxConst: return "cwise_max";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kGatherRows: return "gather_rows";
    case Op::kSumAll: return "sum";
    case Op::kRowSum: return "row_sum";
    case Op::kColSum: return "col_sum";
    case Op::kBcastCol: return "bcast_col";
    case Op::kBcastRow: return "bcast_row";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kLogSoftmaxRows: return "log_softmax_rows";
    case Op::kRowNormalize: return "row_normalize";
    case Op::kGradReverse: return "grad_reverse";
  }
  return "?";
}

namespace {
constexpr double kNormFloor = 1e-12;

std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace

std::string Graph::describe(Var v) const {
  const Node& n = at(v);
  std::string s = "node #" + std::to_string(v.id) + " (" + op_name(n.op);
  if (!n.name.empty()) s += " '" + n.name + "'";
  s += ", " + shape_str(n.r, n.c) + ")";
  return s;
}

const Graph::Node& Graph::at(Var v) const {
  check_arg(v.valid() && v.id < size(), "graph: invalid node handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Graph::Node& Graph::at(Var v) {
  check_arg(v.valid() && v.id < size(), "graph: invalid node handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  values_valid_ = false;
  grads_valid_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(std::string name, Index rows, Index cols) {
  check_arg(rows > 0 && cols > 0, "leaf '" + name + "': shape must be positive");
  Node n;
  n.op = Op::kLeaf;
  n.name = std::move(name);
  n.r = rows;
  n.c = cols;
  return push(std::move(n));
}

Var Graph::constant(Mat value, std::string name) {
  Node n;
  n.op = Op::kConstant;
  n.name = std::move(name);
  n.r = value.rows();
  n.c = value.cols();
  n.value = std::move(value);
  n.bound = true;
  return push(std::move(n));
}

#define DCCL_SAME_SHAPE(opname, a, b)                                        \
  check_arg(at(a).r == at(b).r && at(a).c == at(b).c,                        \
            std::string(opname) + ": shape mismatch " +                      \
                shape_str(at(a).r, at(a).c) + " vs " +                       \
                shape_str(at(b).r, at(b).c) + " between " + describe(a) +    \
                " and " + describe(b))

Var Graph::add(Var a, Var b) {
  DCCL_SAME_SHAPE("add", a, b);
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.r = at(a).r;
  n.c = at(a).c;
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  DCCL_SAME_SHAPE("sub", a, b);
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.r = at(a).r;
  n.c = at(a).c;
  return push(std::move(n));
}

Var Graph::cwise_mul(Var a, Var b) {
  DCCL_SAME_SHAPE("cwise_mul", a, b);
  Node n;
  n.op = Op::kCwiseMul;
  n.a = a.id;
  n.b = b.id;
  n.r = at(a).r;
  n.c = at(a).c;
  return push(std::move(n));
}

#define DCCL_UNARY(method, kind)             \
  Var Graph::method(Var a) {                 \
    Node n;                                  \
    n.op = kind;                             \
    n.a = a.id;                              \
    n.r = at(a).r;                           \
    n.c = at(a).c;                           \
    return push(std::move(n));               \
  }

DCCL_UNARY(tanh, Op::kTanh)
DCCL_UNARY(relu, Op::kRelu)
DCCL_UNARY(exp, Op::kExp)
DCCL_UNARY(log, Op::kLog)
DCCL_UNARY(softmax_rows, Op::kSoftmaxRows)
DCCL_UNARY(log_softmax_rows, Op::kLogSoftmaxRows)
DCCL_UNARY(row_normalize, Op::kRowNormalize)
#undef DCCL_UNARY

Var Graph::scale(Var a, double factor) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.attr = factor;
  n.r = at(a).r;
  n.c = at(a).c;
  return push(std::move(n));
}

Var Graph::cwise_max(Var a, double floor) {
  Node n;
  n.op = Op::kCwiseMaxConst;
  n.a = a.id;
  n.attr = floor;
  n.r = at(a).r;
  n.c = at(a).c;
  return push(std::move(n));
}

Var Graph::grad_reverse(Var a, double factor) {
  Node n;
  n.op = Op::kGradReverse;
  n.a = a.id;
  n.attr = factor;
  n.r = at(a).r;
  n.c = at(a).c;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  check_arg(at(a).c == at(b).r,
            "matmul: inner dimensions disagree, " + shape_str(at(a).r, at(a).c) +
                " * " + shape_str(at(b).r, at(b).c) + " between " + describe(a) +
                " and " + describe(b));
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.r = at(a).r;
  n.c = at(b).c;
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a.id;
  n.r = at(a).c;
  n.c = at(a).r;
  return push(std::move(n));
}

Var Graph::gather_rows(Var table, std::vector<int> rows) {
  check_arg(!rows.empty(), "gather_rows: empty index list");
  for (int r : rows) {
    check_arg(r >= 0 && r < at(table).r,
              "gather_rows: row index " + std::to_string(r) +
                  " out of range for " + describe(table));
  }
  Node n;
  n.op = Op::kGatherRows;
  n.a = table.id;
  n.r = static_cast<Index>(rows.size());
  n.c = at(table).c;
  n.gather = std::move(rows);
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  Node n;
  n.op = Op::kSumAll;
  n.a = a.id;
  n.r = 1;
  n.c = 1;
  return push(std::move(n));
}

Var Graph::row_sum(Var a) {
  Node n;
  n.op = Op::kRowSum;
  n.a = a.id;
  n.r = at(a).r;
  n.c = 1;
  return push(std::move(n));
}

Var Graph::col_sum(Var a) {
  Node n;
  n.op = Op::kColSum;
  n.a = a.id;
  n.r = 1;
  n.c = at(a).c;
  return push(std::move(n));
}

Var Graph::bcast_col(Var v, Index cols) {
  check_arg(at(v).c == 1, "bcast_col: input must be Nx1, got " + describe(v));
  check_arg(cols >= 1, "bcast_col: cols must be >= 1");
  Node n;
  n.op = Op::kBcastCol;
  n.a = v.id;
  n.r = at(v).r;
  n.c = cols;
  return push(std::move(n));
}

Var Graph::bcast_row(Var v, Index rows) {
  check_arg(at(v).r == 1, "bcast_row: input must be 1xM, got " + describe(v));
  check_arg(rows >= 1, "bcast_row: rows must be >= 1");
  Node n;
  n.op = Op::kBcastRow;
  n.a = v.id;
  n.r = rows;
  n.c = at(v).c;
  return push(std::move(n));
}

void Graph::bind(Var leaf, Mat value) {
  Node& n = at(leaf);
  check_arg(n.op == Op::kLeaf, "bind: " + describe(leaf) + " is not a leaf");
  check_arg(value.rows() == n.r && value.cols() == n.c,
            "bind: value shape " + shape_str(value.rows(), value.cols()) +
                " does not match " + describe(leaf));
  n.value = std::move(value);
  n.bound = true;
  values_valid_ = false;
  grads_valid_ = false;
}

void Graph::compute(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const auto A = [&]() -> const Mat& { return nodes_[static_cast<size_t>(n.a)].value; };
  const auto B = [&]() -> const Mat& { return nodes_[static_cast<size_t>(n.b)].value; };
  switch (n.op) {
    case Op::kLeaf:
      check_runtime(n.bound, "evaluate: unbound " + describe(Var{id}));
      break;
    case Op::kConstant:
      break;
    case Op::kAdd: n.value = A() + B(); break;
    case Op::kSub: n.value = A() - B(); break;
    case Op::kCwiseMul: n.value = A().cwiseProduct(B()); break;
    case Op::kScale: n.value = n.attr * A(); break;
    case Op::kCwiseMaxConst: n.value = A().cwiseMax(n.attr); break;
    case Op::kTanh: n.value = A().array().tanh(); break;
    case Op::kRelu: n.value = A().cwiseMax(0.0); break;
    case Op::kExp: n.value = A().array().exp(); break;
    case Op::kLog: n.value = A().array().log(); break;
    case Op::kMatMul: n.value.noalias() = A() * B(); break;
    case Op::kTranspose: n.value = A().transpose(); break;
    case Op::kGatherRows: {
      n.value.resize(n.r, n.c);
      for (Index i = 0; i < n.r; ++i)
        n.value.row(i) = A().row(n.gather[static_cast<size_t>(i)]);
      break;
    }
    case Op::kSumAll: n.value = Mat::Constant(1, 1, A().sum()); break;
    case Op::kRowSum: n.value = A().rowwise().sum(); break;
    case Op::kColSum: n.value = A().colwise().sum(); break;
    case Op::kBcastCol: n.value = A().replicate(1, n.c); break;
    case Op::kBcastRow: n.value = A().replicate(n.r, 1); break;
    case Op::kSoftmaxRows: {
      Mat shifted = A().colwise() - A().rowwise().maxCoeff();
      Mat e = shifted.array().exp();
      n.value = e.array().colwise() / e.rowwise().sum().array();
      break;
    }
    case Op::kLogSoftmaxRows: {
      Mat shifted = A().colwise() - A().rowwise().maxCoeff();
      Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
      n.value = shifted.colwise() - lse;
      break;
    }
    case Op::kRowNormalize: {
      n.value.resize(n.r, n.c);
      for (Index i = 0; i < n.r; ++i) {
        double norm = A().row(i).norm();
        if (norm <= kNormFloor) {
          n.value.row(i).setZero();
        } else {
          n.value.row(i) = A().row(i) / norm;
        }
      }
      break;
    }
    case Op::kGradReverse: n.value = A(); break;
  }
  if (!n.value.allFinite()) {
    throw std::runtime_error("evaluate: non-finite values at " + describe(Var{id}));
  }
}

const Mat& Graph::evaluate(Var output) {
  at(output);  // validate handle
  if (!values_valid_ || evaluated_upto_ < output.id) {
    for (int id = 0; id <= output.id; ++id) compute(id);
    evaluated_upto_ = output.id;
    values_valid_ = true;
  }
  return nodes_[static_cast<size_t>(output.id)].value;
}

void Graph::backward(Var scalar_output) {
  const Node& out = at(scalar_output);
  check_runtime(values_valid_ && evaluated_upto_ >= scalar_output.id,
                "backward: evaluate the output first");
  check_arg(out.r == 1 && out.c == 1,
            "backward: output must be scalar, got " + describe(scalar_output));

  for (Node& n : nodes_) n.grad = Mat::Zero(n.r, n.c);
  std::vector<char> touched(nodes_.size(), 0);
  nodes_[static_cast<size_t>(scalar_output.id)].grad(0, 0) = 1.0;
  touched[static_cast<size_t>(scalar_output.id)] = 1;

  for (int id = scalar_output.id; id >= 0; --id) {
    if (!touched[static_cast<size_t>(id)]) continue;
    Node& n = nodes_[static_cast<size_t>(id)];
    const Mat& g = n.grad;
    auto ga = [&]() -> Mat& { return nodes_[static_cast<size_t>(n.a)].grad; };
    auto gb = [&]() -> Mat& { return nodes_[static_cast<size_t>(n.b)].grad; };
    auto va = [&]() -> const Mat& { return nodes_[static_cast<size_t>(n.a)].value; };
    auto vb = [&]() -> const Mat& { return nodes_[static_cast<size_t>(n.b)].value; };
    auto touch = [&](int i) { touched[static_cast<size_t>(i)] = 1; };
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd:
        ga() += g;
        gb() += g;
        touch(n.a);
        touch(n.b);
        break;
      case Op::kSub:
        ga() += g;
        gb() -= g;
        touch(n.a);
        touch(n.b);
        break;
      case Op::kCwiseMul:
        ga() += g.cwiseProduct(vb());
        gb() += g.cwiseProduct(va());
        touch(n.a);
        touch(n.b);
        break;
      case Op::kScale:
        ga() += n.attr * g;
        touch(n.a);
        break;
      case Op::kCwiseMaxConst:
        ga() += (va().array() >= n.attr).cast<double>().matrix().cwiseProduct(g);
        touch(n.a);
        break;
      case Op::kTanh:
        ga() += (1.0 - n.value.array().square()).matrix().cwiseProduct(g);
        touch(n.a);
        break;
      case Op::kRelu:
        ga() += (va().array() > 0.0).cast<double>().matrix().cwiseProduct(g);
        touch(n.a);
        break;
      case Op::kExp:
        ga() += n.value.cwiseProduct(g);
        touch(n.a);
        break;
      case Op::kLog:
        ga() += g.cwiseQuotient(va());
        touch(n.a);
        break;
      case Op::kMatMul:
        ga().noalias() += g * vb().transpose();
        gb().noalias() += va().transpose() * g;
        touch(n.a);
        touch(n.b);
        break;
      case Op::kTranspose:
        ga() += g.transpose();
        touch(n.a);
        break;
      case Op::kGatherRows:
        for (Index i = 0; i < n.r; ++i)
          ga().row(n.gather[static_cast<size_t>(i)]) += g.row(i);
        touch(n.a);
        break;
      case Op::kSumAll:
        ga().array() += g(0, 0);
        touch(n.a);
        break;
      case Op::kRowSum:
        ga() += g.replicate(1, va().cols());
        touch(n.a);
        break;
      case Op::kColSum:
        ga() += g.replicate(va().rows(), 1);
        touch(n.a);
        break;
      case Op::kBcastCol:
        ga() += g.rowwise().sum();
        touch(n.a);
        break;
      case Op::kBcastRow:
        ga() += g.colwise().sum();
        touch(n.a);
        break;
      case Op::kSoftmaxRows: {
        // dx = p .* (g - rowdot(g, p))
        Eigen::VectorXd dot = (g.cwiseProduct(n.value)).rowwise().sum();
        ga() += n.value.cwiseProduct(g.colwise() - dot);
        touch(n.a);
        break;
      }
      case Op::kLogSoftmaxRows: {
        // dx = g - softmax(x) .* rowsum(g)
        Eigen::VectorXd rs = g.rowwise().sum();
        Mat p = n.value.array().exp();
        ga() += g - (p.array().colwise() * rs.array()).matrix();
        touch(n.a);
        break;
      }
      case Op::kRowNormalize: {
        for (Index i = 0; i < n.r; ++i) {
          double norm = va().row(i).norm();
          if (norm <= kNormFloor) continue;  // subgradient 0 at the origin
          Eigen::RowVectorXd u = n.value.row(i);
          ga().row(i) += (g.row(i) - u * (u.dot(g.row(i)))) / norm;
        }
        touch(n.a);
        break;
      }
      case Op::kGradReverse:
        ga() -= n.attr * g;
        touch(n.a);
        break;
    }
  }
  grads_valid_ = true;
}

double Graph::gradient_check(Var scalar_output, Var leaf, double h) {
  check_arg(h > 0.0, "gradient_check: h must be positive");
  Node& lf = at(leaf);
  check_arg(lf.op == Op::kLeaf, "gradient_check: " + describe(leaf) + " is not a leaf");
  check_runtime(lf.bound, "gradient_check: leaf is unbound");

  evaluate(scalar_output);
  backward(scalar_output);
  const Mat analytic = nodes_[static_cast<size_t>(leaf.id)].grad;
  const Mat original = lf.value;

  double max_rel = 0.0;
  for (Index i = 0; i < original.rows(); ++i) {
    for (Index j = 0; j < original.cols(); ++j) {
      const double v = original(i, j);
      if (v + h == v || v - h == v) {
        bind(leaf, original);
        throw std::runtime_error(
            "gradient_check: step h=" + std::to_string(h) +
            " underflows against value " + std::to_string(v) +
            "; use a larger h");
      }
      Mat pert = original;
      pert(i, j) = v + h;
      bind(leaf, pert);
      const double fp = evaluate(scalar_output)(0, 0);
      pert(i, j) = v - h;
      bind(leaf, pert);
      const double fm = evaluate(scalar_output)(0, 0);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic(i, j);
      const double rel =
          std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  bind(leaf, original);
  evaluate(scalar_output);
  return max_rel;
}

const Mat& Graph::value(Var v) const {
  const Node& n = at(v);
  check_runtime(values_valid_ && v.id <= evaluated_upto_,
                "value: " + describe(v) + " has not been evaluated");
  return n.value;
}

const Mat& Graph::grad(Var v) const {
  const Node& n = at(v);
  check_runtime(grads_valid_, "grad: run backward first");
  return n.grad;
}

Index Graph::rows(Var v) const { return at(v).r; }
Index Graph::cols(Var v) const { return at(v).c; }

// ---- composites ----------------------------------------------------------

Var mean(Graph& g, Var a) {
  const double n = static_cast<double>(g.rows(a) * g.cols(a));
  return g.scale(g.sum(a), 1.0 / n);
}

Var affine(Graph& g, Var x, Var w, Var b) {
  Var xw = g.matmul(x, w);
  return g.add(xw, g.bcast_row(b, g.rows(x)));
}

Var squared_norm(Graph& g, Var a) { return g.sum(g.cwise_mul(a, a)); }

Var cosine_rows(Graph& g, Var a, Var b) {
  Var an = g.row_normalize(a);
  Var bn = g.row_normalize(b);
  return g.row_sum(g.cwise_mul(an, bn));
}

Var cosine_matrix(Graph& g, Var a, Var b) {
  Var an = g.row_normalize(a);
  Var bn = g.row_normalize(b);
  return g.matmul(an, g.transpose(bn));
}

Var cross_entropy(Graph& g, Var logits, const std::vector<int>& labels) {
  const Index n = g.rows(logits);
  const Index classes = g.cols(logits);
  check_arg(static_cast<Index>(labels.size()) == n,
            "cross_entropy: got " + std::to_string(labels.size()) +
                " labels for " + std::to_string(n) + " rows");
  Mat onehot = Mat::Zero(n, classes);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    check_arg(y >= 0 && y < classes,
              "cross_entropy: label " + std::to_string(y) + " out of range [0," +
                  std::to_string(classes) + ")");
    onehot(i, y) = 1.0;
  }
  Var picked = g.cwise_mul(g.log_softmax_rows(logits), g.constant(std::move(onehot)));
  return g.scale(g.sum(picked), -1.0 / static_cast<double>(n));
}

}  // namespace dccl::ad
