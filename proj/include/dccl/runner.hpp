#pragma once

#include <string>
#include <vector>

#include "dccl/config.hpp"
#include "dccl/eval.hpp"

namespace dccl {

struct CellResult {
  Method method = Method::source_only;
  uint64_t seed = 0;
  double target_accuracy = 0.0;
  double source_accuracy = 0.0;
  double val_error = 1.0;
  int checkpoint_epoch = 0;
  double d_a = 0.0;  // probe A-distance between train-split representations
  std::string dir;
};

struct MethodSummary {
  Method method = Method::source_only;
  Method reference = Method::source_only;
  RunSummary stats;  // b = method, a = reference, paired by seed
};

struct MatrixResult {
  std::vector<CellResult> cells;
  std::vector<MethodSummary> summaries;
};

// Writes the five corpus splits plus corpus_meta.json into dir.
std::vector<std::string> write_corpora(const CorpusSet& data, const CorpusSpec& spec,
                                       const std::string& dir);

// One (method, seed) training cell: trains, then writes metrics.jsonl,
// checkpoint.txt and eval.json under cell_dir.
CellResult run_cell(const RunConfig& cfg, const CorpusSet& data, Method method,
                    uint64_t seed, const std::string& cell_dir);

// Full method x seed grid over a shared corpus, paired summaries against
// source_only, summary tables and a manifest, all under out_dir.
MatrixResult run_matrix(const RunConfig& cfg, const std::string& out_dir);

}  // namespace dccl
