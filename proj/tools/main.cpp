// dccl command-line laboratory: data generation, training, evaluation,
// domain diagnostics and full experiment matrices, driven by one config file.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dccl/config.hpp"
#include "dccl/runner.hpp"

namespace fs = std::filesystem;
using namespace dccl;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset = "desk";
  std::string out_dir;
  std::string method;
  int64_t seed = -1;
};

RunConfig load_run_config(const CommonOpts& opts) {
  RunConfig cfg = preset_config(opts.preset);
  if (!opts.config_path.empty()) apply_config_file(cfg, opts.config_path);
  if (!opts.method.empty()) {
    try {
      cfg.train.method = method_from_string(opts.method);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (opts.seed >= 0) cfg.train.seed = static_cast<uint64_t>(opts.seed);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  cfg.finalize();
  return cfg;
}

std::string resolve_out_dir(const RunConfig& cfg) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  const char* root = std::getenv("DCCL_OUT_ROOT");
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  return std::string(root != nullptr ? root : "runs") + "/run-" +
         std::string(hash).substr(0, 8);
}

void write_manifest(const RunConfig& cfg, const std::string& out_dir,
                    const std::vector<std::string>& files) {
  nlohmann::json manifest;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  manifest["config_hash"] = hash;
  manifest["preset"] = cfg.preset;
  manifest["seeds"] = cfg.seeds;
  std::vector<std::string> methods;
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  manifest["methods"] = methods;
  std::vector<std::string> rel;
  for (const std::string& f : files) rel.push_back(fs::relative(f, out_dir).string());
  std::sort(rel.begin(), rel.end());
  manifest["files"] = rel;
  std::ofstream out(out_dir + "/manifest.json");
  check_runtime(out.good(), "cannot write manifest under " + out_dir);
  out << manifest.dump(2) << "\n";
}

int cmd_generate_data(const CommonOpts& opts) {
  const RunConfig cfg = load_run_config(opts);
  const std::string out = resolve_out_dir(cfg);
  fs::create_directories(out);
  const CorpusSet data = generate_corpus(cfg.corpus);
  std::vector<std::string> files = write_corpora(data, cfg.corpus, out + "/corpora");
  std::ofstream resolved(out + "/config_resolved.ini");
  resolved << canonical_text(cfg);
  resolved.close();
  files.push_back(out + "/config_resolved.ini");
  write_manifest(cfg, out, files);
  std::cout << "corpora written under " << out << "/corpora\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  const RunConfig cfg = load_run_config(opts);
  const std::string out = resolve_out_dir(cfg);
  fs::create_directories(out);
  const CorpusSet data = generate_corpus(cfg.corpus);
  const std::string cell_dir =
      out + "/" + to_string(cfg.train.method) + "_seed" + std::to_string(cfg.train.seed);
  const CellResult cell = run_cell(cfg, data, cfg.train.method, cfg.train.seed, cell_dir);

  std::ofstream resolved(out + "/config_resolved.ini");
  resolved << canonical_text(cfg);
  resolved.close();
  write_manifest(cfg, out,
                 {cell_dir + "/metrics.jsonl", cell_dir + "/checkpoint.txt",
                  cell_dir + "/eval.json", out + "/config_resolved.ini"});
  std::cout << "method " << to_string(cell.method) << " seed " << cell.seed
            << ": target accuracy " << cell.target_accuracy << ", source accuracy "
            << cell.source_accuracy << ", checkpoint epoch " << cell.checkpoint_epoch
            << "\n"
            << "outputs under " << cell_dir << "\n";
  return 0;
}

int cmd_matrix(const CommonOpts& opts) {
  const RunConfig cfg = load_run_config(opts);
  const std::string out = resolve_out_dir(cfg);
  const MatrixResult result = run_matrix(cfg, out);
  for (const MethodSummary& s : result.summaries) {
    std::printf("%-12s vs %-12s: mean %.4f (ref %.4f), diff %+.4f, p %.4g%s\n",
                to_string(s.method).c_str(), to_string(s.reference).c_str(),
                s.stats.mean_b, s.stats.mean_a, s.stats.mean_diff, s.stats.p_value,
                s.stats.degenerate ? " (degenerate)" : "");
  }
  std::cout << "matrix outputs under " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& corpus_path,
                 const std::string& dump_path, const std::string& out_path) {
  const ModelParams params = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_path);
  nlohmann::json report;
  report["corpus"] = corpus_path;
  report["examples"] = corpus.size();
  if (corpus.labeled()) {
    report["accuracy"] = accuracy(params, corpus);
  }
  if (!dump_path.empty()) {
    dump_embeddings(params, corpus, dump_path);
    report["embeddings"] = dump_path;
  }
  const std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    check_runtime(out.good(), "cannot write " + out_path);
    out << text;
  }
  std::cout << text;
  return 0;
}

int cmd_a_distance(const std::string& checkpoint, const std::string& source_path,
                   const std::string& target_path, uint64_t split_seed,
                   const std::string& out_path) {
  const ModelParams params = load_checkpoint(checkpoint);
  const Corpus source = load_corpus(source_path);
  const Corpus target = load_corpus(target_path);
  const ADistanceReport report =
      a_distance(encode_corpus(params, source), encode_corpus(params, target),
                 split_seed);
  nlohmann::json j;
  j["domain_error"] = report.domain_error;
  j["a_distance"] = report.d_a;
  j["n_source"] = report.n_source;
  j["n_target"] = report.n_target;
  j["split_seed"] = report.split_seed;
  const std::string text = j.dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    check_runtime(out.good(), "cannot write " + out_path);
    out << text;
  }
  std::cout << text;
  return 0;
}

int cmd_mask_stats(const std::string& source_path, const std::string& target_path,
                   double threshold, double smooth, const std::string& out_path) {
  const Corpus source = load_corpus(source_path);
  const Corpus target = load_corpus(target_path);
  int vocab = 0;
  for (const Corpus* c : {&source, &target})
    for (const Example& ex : c->examples)
      for (int t : ex.tokens) vocab = std::max(vocab, t + 1);
  const DomainTokenStats stats = DomainTokenStats::compute(source, target, vocab, smooth);

  std::ostringstream csv;
  csv << "token,count_source,count_target,ratio_in_source,ratio_in_target,masked\n";
  for (int t = 0; t < vocab; ++t) {
    const double rs = frequency_ratio(t, 0, stats);
    const double rt = frequency_ratio(t, 1, stats);
    csv << t << "," << stats.counts[0][static_cast<size_t>(t)] << ","
        << stats.counts[1][static_cast<size_t>(t)] << "," << rs << "," << rt << ","
        << (rs > threshold || rt > threshold ? 1 : 0) << "\n";
  }
  const double frac_source = corpus_masked_fraction(source, stats, threshold);
  const double frac_target = corpus_masked_fraction(target, stats, threshold);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    check_runtime(out.good(), "cannot write " + out_path);
    out << csv.str();
    std::cout << "table written to " << out_path << "\n";
  } else {
    std::cout << csv.str();
  }
  std::printf("masked fraction at threshold %g: source %.4f, target %.4f\n", threshold,
              frac_source, frac_target);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale domain adaptation laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  uint64_t split_seed = 1;
  double threshold = 5.0, smooth = 1.0;
  std::string checkpoint, corpus_path, source_path, target_path, dump_path, out_path;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "configuration file");
    cmd->add_option("--preset", opts.preset, "base defaults: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--out", opts.out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("generate-data", "write the paired corpora");
  add_config_flags(gen);

  CLI::App* train_cmd = app.add_subcommand("train", "run one (method, seed) cell");
  add_config_flags(train_cmd);
  train_cmd->add_option("--method", opts.method, "training method tag");
  train_cmd->add_option("--seed", opts.seed, "training seed");

  CLI::App* matrix = app.add_subcommand("matrix", "full method x seed grid");
  add_config_flags(matrix);

  CLI::App* evaluate = app.add_subcommand("evaluate", "accuracy report for a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("--corpus", corpus_path, "corpus file")->required();
  evaluate->add_option("--dump-embeddings", dump_path, "write representations here");
  evaluate->add_option("--report", out_path, "also write the JSON report here");

  CLI::App* adist = app.add_subcommand("a-distance", "probe domain divergence");
  adist->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  adist->add_option("--source", source_path, "source corpus file")->required();
  adist->add_option("--target", target_path, "target corpus file")->required();
  adist->add_option("--split-seed", split_seed, "train/test split seed");
  adist->add_option("--report", out_path, "also write the JSON report here");

  CLI::App* mask = app.add_subcommand("mask-stats", "frequency-ratio table");
  mask->add_option("--source", source_path, "source corpus file")->required();
  mask->add_option("--target", target_path, "target corpus file")->required();
  mask->add_option("--threshold", threshold, "masking threshold");
  mask->add_option("--smooth", smooth, "count smoothing");
  mask->add_option("--table", out_path, "write the CSV table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(opts);
    if (train_cmd->parsed()) return cmd_train(opts);
    if (matrix->parsed()) return cmd_matrix(opts);
    if (evaluate->parsed()) return cmd_evaluate(checkpoint, corpus_path, dump_path, out_path);
    if (adist->parsed()) return cmd_a_distance(checkpoint, source_path, target_path,
                                               split_seed, out_path);
    if (mask->parsed()) return cmd_mask_stats(source_path, target_path, threshold,
                                              smooth, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
