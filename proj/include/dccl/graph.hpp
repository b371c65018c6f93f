#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "dccl/util.hpp"

namespace dccl::ad {

using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

// Handle into a Graph. Cheap to copy, invalid until assigned.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Closed primitive set. New losses are composed from these; every op has a
// matching backward rule in Graph::backward.
enum class Op : uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kCwiseMul,
  kScale,          // attr: factor
  kCwiseMaxConst,  // attr: floor
  kTanh,
  kRelu,
  kExp,
  kLog,
  kMatMul,
  kTranspose,
  kGatherRows,  // rows: table row per output row
  kSumAll,      // -> 1x1
  kRowSum,      // NxM -> Nx1
  kColSum,      // NxM -> 1xM
  kBcastCol,    // Nx1 -> NxM
  kBcastRow,    // 1xM -> NxM
  kSoftmaxRows,
  kLogSoftmaxRows,
  kRowNormalize,  // rows scaled to unit norm; zero rows stay zero
  kGradReverse,   // attr: factor; forward identity, backward -factor * g
};

const char* op_name(Op op);

// Reverse-mode tape over dense double matrices. Build once, bind leaves,
// evaluate, backward. Scalars are 1x1. Shapes are fixed at build time and
// checked per primitive; evaluation additionally rejects non-finite
// intermediates. Single writer during construction and passes; read-only
// access afterwards is safe from any thread.
class Graph {
 public:
  Var leaf(std::string name, Index rows, Index cols);
  Var constant(Mat value, std::string name = "");

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cwise_mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var cwise_max(Var a, double floor);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var gather_rows(Var table, std::vector<int> rows);
  Var sum(Var a);
  Var row_sum(Var a);
  Var col_sum(Var a);
  Var bcast_col(Var v, Index cols);
  Var bcast_row(Var v, Index rows);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var row_normalize(Var a);
  Var grad_reverse(Var a, double factor);

  void bind(Var leaf, Mat value);

  // Forward pass through `output`; values are cached for backward and stay
  // valid until the next bind.
  const Mat& evaluate(Var output);

  // Reverse pass from a scalar output previously evaluated. Leaves outside
  // the output's dependency cone keep zero gradients.
  void backward(Var scalar_output);

  // Max relative error between backward() and a central finite difference
  // over every entry of `leaf`:  |a - n| / max(1e-12, |a| + |n|).
  double gradient_check(Var scalar_output, Var leaf, double h = 1e-5);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;
  Index rows(Var v) const;
  Index cols(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }
  std::string describe(Var v) const;

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double attr = 0.0;
    std::vector<int> gather;
    std::string name;
    Index r = 0, c = 0;
    Mat value;
    Mat grad;
    bool bound = false;
  };

  Var push(Node n);
  const Node& at(Var v) const;
  Node& at(Var v);
  void compute(int id);

  std::vector<Node> nodes_;
  int evaluated_upto_ = -1;
  bool values_valid_ = false;
  bool grads_valid_ = false;
};

// ---- composite builders -------------------------------------------------
// Free functions that assemble common expressions from the primitive set.

Var mean(Graph& g, Var a);
Var affine(Graph& g, Var x, Var w, Var b);  // x*w + row-broadcast bias
Var squared_norm(Graph& g, Var a);
Var cosine_rows(Graph& g, Var a, Var b);    // paired row cosine, Nx1
Var cosine_matrix(Graph& g, Var a, Var b);  // all-pairs row cosine, NxM

// Mean cross-entropy of row-softmaxed logits against integer labels.
Var cross_entropy(Graph& g, Var logits, const std::vector<int>& labels);

}  // namespace dccl::ad
