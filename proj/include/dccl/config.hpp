#pragma once

#include <string>
#include <vector>

#include "dccl/corpus.hpp"
#include "dccl/train.hpp"

namespace dccl {

// Everything one experiment needs, parsed from a single plain-text file of
// [section] key = value lines. Every key has a documented default; unknown
// sections or keys are rejected with their name.
struct RunConfig {
  std::string preset = "desk";
  CorpusSpec corpus;
  TrainConfig train;
  std::vector<Method> methods = {Method::source_only, Method::dccl};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir;  // empty: resolved by the CLI from --out / DCCL_OUT_ROOT

  // Mirrors the corpus-owned dimensions into the model config.
  void finalize();
};

// Baseline defaults. "desk" is calibrated for the synthetic benchmark and
// runs in seconds; "paper" keeps the published optimizer scale (lr 1e-5)
// for reference runs.
RunConfig preset_config(const std::string& name);

void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::string& path);

// Full key = value dump in a fixed order; reparsing it reproduces the config.
std::string canonical_text(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

}  // namespace dccl
