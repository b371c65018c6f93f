#include "dccl/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dccl {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  check_runtime(out.good(), "runner: cannot open " + path);
  out << text;
  check_runtime(out.good(), "runner: write failed for " + path);
}

std::string cell_name(Method m, uint64_t seed) {
  return to_string(m) + "_seed" + std::to_string(seed);
}

}  // namespace

std::vector<std::string> write_corpora(const CorpusSet& data, const CorpusSpec& spec,
                                       const std::string& dir) {
  fs::create_directories(dir);
  std::vector<std::string> files;
  auto save = [&](const Corpus& c, const std::string& name) {
    const std::string path = dir + "/" + name;
    save_corpus(c, path);
    files.push_back(path);
  };
  save(data.source_train, "source_train.jsonl");
  save(data.source_val, "source_val.jsonl");
  save(data.source_test, "source_test.jsonl");
  save(data.target_train, "target_train.jsonl");
  save(data.target_test, "target_test.jsonl");

  nlohmann::json meta;
  meta["seed"] = spec.seed;
  meta["classes"] = spec.classes;
  meta["vocab_size"] = spec.vocab_size;
  meta["vocab_used"] = spec.vocab_used();
  meta["max_len"] = spec.max_len;
  meta["shift"] = spec.shift;
  meta["sizes"] = {{"source_train", spec.source_train},
                   {"target_train", spec.target_train},
                   {"validation", spec.validation},
                   {"test", spec.test}};
  const std::string meta_path = dir + "/corpus_meta.json";
  write_text(meta_path, meta.dump(2) + "\n");
  files.push_back(meta_path);
  return files;
}

CellResult run_cell(const RunConfig& cfg, const CorpusSet& data, Method method,
                    uint64_t seed, const std::string& cell_dir) {
  fs::create_directories(cell_dir);
  TrainConfig tc = cfg.train;
  tc.method = method;
  tc.seed = seed;

  const TrainResult result = train(data, tc);
  write_metrics_jsonl(result.metrics, cell_dir + "/metrics.jsonl");
  save_checkpoint(result.best_params, cell_dir + "/checkpoint.txt");

  CellResult cell;
  cell.method = method;
  cell.seed = seed;
  cell.dir = cell_dir;
  cell.target_accuracy = accuracy(result.best_params, data.target_test);
  cell.source_accuracy = accuracy(result.best_params, data.source_test);
  cell.val_error = result.metrics.checkpoint_val_error;
  cell.checkpoint_epoch = result.metrics.checkpoint_epoch;

  // One probe split is noisy at desk-scale sample counts; the reported
  // diagnostic averages a small fixed set of splits over the same features.
  const Mat source_h = encode_corpus(result.best_params, data.source_train);
  const Mat target_h = encode_corpus(result.best_params, data.target_train);
  cell.d_a = 0.0;
  for (uint64_t split = 1; split <= 5; ++split) {
    cell.d_a += a_distance(source_h, target_h, split).d_a / 5.0;
  }

  nlohmann::json j;
  j["method"] = to_string(method);
  j["seed"] = seed;
  j["target_accuracy"] = cell.target_accuracy;
  j["source_accuracy"] = cell.source_accuracy;
  j["val_error"] = cell.val_error;
  j["checkpoint_epoch"] = cell.checkpoint_epoch;
  j["a_distance"] = cell.d_a;
  write_text(cell_dir + "/eval.json", j.dump(2) + "\n");
  return cell;
}

MatrixResult run_matrix(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> files;

  std::vector<Method> methods = cfg.methods;
  if (std::find(methods.begin(), methods.end(), Method::source_only) == methods.end()) {
    methods.insert(methods.begin(), Method::source_only);  // summary reference
  }

  const CorpusSet data = generate_corpus(cfg.corpus);
  for (const std::string& f : write_corpora(data, cfg.corpus, out_dir + "/corpora"))
    files.push_back(f);

  const std::string resolved = out_dir + "/config_resolved.ini";
  write_text(resolved, canonical_text(cfg));
  files.push_back(resolved);

  MatrixResult result;
  for (Method m : methods) {
    for (uint64_t seed : cfg.seeds) {
      const std::string dir = out_dir + "/cells/" + cell_name(m, seed);
      result.cells.push_back(run_cell(cfg, data, m, seed, dir));
      files.push_back(dir + "/metrics.jsonl");
      files.push_back(dir + "/checkpoint.txt");
      files.push_back(dir + "/eval.json");
    }
  }

  auto accs_of = [&](Method m) {
    std::vector<double> accs;
    for (const CellResult& c : result.cells)
      if (c.method == m) accs.push_back(c.target_accuracy);
    return accs;
  };
  const std::vector<double> ref = accs_of(Method::source_only);
  for (Method m : methods) {
    if (m == Method::source_only) continue;
    MethodSummary s;
    s.method = m;
    s.reference = Method::source_only;
    s.stats = summarize_runs(ref, accs_of(m));
    result.summaries.push_back(s);
  }

  // cells.csv: one row per (method, seed); summary.csv: one row per method.
  {
    std::ostringstream csv;
    csv << "method,seed,target_accuracy,source_accuracy,val_error,checkpoint_epoch,"
           "a_distance\n";
    char buf[256];
    for (const CellResult& c : result.cells) {
      std::snprintf(buf, sizeof(buf), "%s,%llu,%.17g,%.17g,%.17g,%d,%.17g\n",
                    to_string(c.method).c_str(),
                    static_cast<unsigned long long>(c.seed), c.target_accuracy,
                    c.source_accuracy, c.val_error, c.checkpoint_epoch, c.d_a);
      csv << buf;
    }
    write_text(out_dir + "/cells.csv", csv.str());
    files.push_back(out_dir + "/cells.csv");
  }
  {
    std::ostringstream csv;
    csv << "method,reference,n_seeds,mean_accuracy,std_accuracy,ref_mean,ref_std,"
           "mean_diff,t_stat,p_value,degenerate\n";
    std::ofstream jsonl(out_dir + "/summary.jsonl");
    char buf[320];
    for (const MethodSummary& s : result.summaries) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                    to_string(s.method).c_str(), to_string(s.reference).c_str(),
                    s.stats.n, s.stats.mean_b, s.stats.std_b, s.stats.mean_a,
                    s.stats.std_a, s.stats.mean_diff, s.stats.t_stat, s.stats.p_value,
                    s.stats.degenerate ? 1 : 0);
      csv << buf;
      nlohmann::json j;
      j["method"] = to_string(s.method);
      j["reference"] = to_string(s.reference);
      j["n_seeds"] = s.stats.n;
      j["mean_accuracy"] = s.stats.mean_b;
      j["std_accuracy"] = s.stats.std_b;
      j["ref_mean"] = s.stats.mean_a;
      j["ref_std"] = s.stats.std_a;
      j["mean_diff"] = s.stats.mean_diff;
      j["t_stat"] = s.stats.t_stat;
      j["p_value"] = s.stats.p_value;
      j["degenerate"] = s.stats.degenerate;
      jsonl << j.dump() << "\n";
    }
    write_text(out_dir + "/summary.csv", csv.str());
    files.push_back(out_dir + "/summary.csv");
    files.push_back(out_dir + "/summary.jsonl");
  }

  // Manifest with the config hash and the file inventory, paths relative to
  // the run directory.
  {
    nlohmann::json manifest;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    manifest["config_hash"] = hash;
    manifest["preset"] = cfg.preset;
    std::vector<std::string> method_names;
    for (Method m : methods) method_names.push_back(to_string(m));
    manifest["methods"] = method_names;
    manifest["seeds"] = cfg.seeds;
    std::vector<std::string> rel;
    for (const std::string& f : files)
      rel.push_back(fs::relative(f, out_dir).string());
    std::sort(rel.begin(), rel.end());
    manifest["files"] = rel;
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

}  // namespace dccl
