#pragma once

#include <cstdint>
#include <string>

#include "dccl/corpus.hpp"
#include "dccl/graph.hpp"

namespace dccl {

using ad::Mat;
using ad::Var;

struct ModelConfig {
  int vocab_size = 200;
  int max_len = 12;
  int embed_dim = 32;
  int hidden_dim = 64;
  int proj_dim = 32;
  int classes = 2;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Embedding table + two tanh feed-forward layers form the encoder; linear
// task and domain heads sit on top, plus a one-hidden-layer projection head
// for the contrastive space. Embeddings start uniform in [-0.08, 0.08] from
// the run seed; affine weights use unit-gain fan-in scaling; biases at zero.
struct ModelParams {
  ModelConfig cfg;
  Mat E;             // vocab x embed
  Mat W1, b1;        // embed -> hidden
  Mat W2, b2;        // hidden -> hidden
  Mat Wy, by;        // hidden -> classes
  Mat Wd, bd;        // hidden -> 2
  Mat Wp1, bp1;      // hidden -> proj
  Mat Wp2, bp2;      // proj -> proj

  static ModelParams init(const ModelConfig& cfg, uint64_t seed);
  static ModelParams zeros_like(const ModelParams& other);

  template <typename F>
  void visit(F&& f) {
    f("E", E); f("W1", W1); f("b1", b1); f("W2", W2); f("b2", b2);
    f("Wy", Wy); f("by", by); f("Wd", Wd); f("bd", bd);
    f("Wp1", Wp1); f("bp1", bp1); f("Wp2", Wp2); f("bp2", bp2);
  }
  template <typename F>
  void visit(F&& f) const {
    f("E", E); f("W1", W1); f("b1", b1); f("W2", W2); f("b2", b2);
    f("Wy", Wy); f("by", by); f("Wd", Wd); f("bd", bd);
    f("Wp1", Wp1); f("bp1", bp1); f("Wp2", Wp2); f("bp2", bp2);
  }

  bool all_finite() const;
  bool equals(const ModelParams& other) const;
};

// Leaf handles for one graph, bound to a parameter snapshot.
struct ParamVars {
  Var E, W1, b1, W2, b2, Wy, by, Wd, bd, Wp1, bp1, Wp2, bp2;

  template <typename F>
  void visit(F&& f) const {
    f("E", E); f("W1", W1); f("b1", b1); f("W2", W2); f("b2", b2);
    f("Wy", Wy); f("by", by); f("Wd", Wd); f("bd", bd);
    f("Wp1", Wp1); f("bp1", bp1); f("Wp2", Wp2); f("bp2", bp2);
  }
};

ParamVars add_params(ad::Graph& g, const ModelParams& params);

// Reads gradients of every parameter leaf after backward().
ModelParams collect_grads(const ad::Graph& g, const ParamVars& vars,
                          const ModelParams& like);

// Batch-derived constants shared by the forward builders. Token embeddings
// are carried flattened as (N*L) x D; `pad_rows` zeroes pad rows (and any
// perturbation attached to them).
struct BatchConstants {
  std::vector<int> flat_tokens;
  Mat pad_rows;  // (N*L) x D of 0/1 rows
};

BatchConstants batch_constants(const TokenBatch& batch, const ModelConfig& cfg);

// N x (N*L) mean-pool operator over non-pad positions; rejects examples with
// no real tokens.
Mat pooling_matrix(const TokenBatch& batch);

// embedded token rows, pad rows zeroed: (N*L) x D
Var embed_tokens(ad::Graph& g, const ParamVars& p, const TokenBatch& batch,
                 const ModelConfig& cfg);

// h = tanh(W2 . tanh(W1 . meanpool(embedded + delta))): N x H.
// `delta` may be invalid (treated as zero); it is re-masked against pads.
Var encode(ad::Graph& g, const ParamVars& p, const TokenBatch& batch,
           const ModelConfig& cfg, Var embedded, Var delta = {});

Var task_logits(ad::Graph& g, const ParamVars& p, Var h);
Var domain_logits(ad::Graph& g, const ParamVars& p, Var h);
Var project(ad::Graph& g, const ParamVars& p, Var h);

// Eager convenience wrappers; each builds a fresh graph internally so every
// forward in the project runs through the same single definition.
Mat embed_values(const TokenBatch& batch, const ModelParams& params);
Mat encode_values(const TokenBatch& batch, const ModelParams& params,
                  const Mat* delta = nullptr);
Mat task_logit_values(const TokenBatch& batch, const ModelParams& params,
                      const Mat* delta = nullptr);
Mat domain_logit_values(const TokenBatch& batch, const ModelParams& params,
                        const Mat* delta = nullptr);
Mat project_values(const TokenBatch& batch, const ModelParams& params,
                   const Mat* delta = nullptr);

// ---- checkpoint file -------------------------------------------------------
// Plain-text listing of named arrays with shapes; values printed with 17
// significant digits so a reload reproduces every double bit-exactly.

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace dccl
