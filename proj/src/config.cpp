#include "dccl/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dccl {

void RunConfig::finalize() {
  train.model.vocab_size = corpus.vocab_size;
  train.model.max_len = corpus.max_len;
  train.model.classes = corpus.classes;
  corpus.validate();
  train.validate();
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  cfg.preset = name;
  if (name == "desk") {
    cfg.train.lr = 1.5e-3;  // calibrated for the synthetic benchmark
  } else if (name == "paper") {
    cfg.train.lr = 1e-5;  // published optimizer scale
  } else {
    throw ConfigError("config: unknown preset '" + name + "' (desk|paper)");
  }
  cfg.finalize();
  return cfg;
}

namespace {

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number '" + v + "' for key " + key);
  }
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(d);
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer '" + v + "' for key " + key);
  }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer '" + v + "' for key " + key);
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: bad boolean '" + v + "' for key " + key);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto I = [](int CorpusSpec::* f) {
      return [f](RunConfig& c, const std::string& v) { c.corpus.*f = parse_int(v, "corpus"); };
    };
    auto D = [](double CorpusSpec::* f) {
      return [f](RunConfig& c, const std::string& v) { c.corpus.*f = parse_double(v, "corpus"); };
    };
    t["corpus.seed"] = [](RunConfig& c, const std::string& v) {
      c.corpus.seed = parse_u64(v, "corpus.seed");
    };
    t["corpus.source_train"] = I(&CorpusSpec::source_train);
    t["corpus.target_train"] = I(&CorpusSpec::target_train);
    t["corpus.validation"] = I(&CorpusSpec::validation);
    t["corpus.test"] = I(&CorpusSpec::test);
    t["corpus.classes"] = I(&CorpusSpec::classes);
    t["corpus.max_len"] = I(&CorpusSpec::max_len);
    t["corpus.min_len"] = I(&CorpusSpec::min_len);
    t["corpus.vocab_size"] = I(&CorpusSpec::vocab_size);
    t["corpus.sentiment_per_class"] = I(&CorpusSpec::sentiment_per_class);
    t["corpus.filler"] = I(&CorpusSpec::filler);
    t["corpus.content_per_domain"] = I(&CorpusSpec::content_per_domain);
    t["corpus.spurious_per_class"] = I(&CorpusSpec::spurious_per_class);
    t["corpus.shift"] = D(&CorpusSpec::shift);
    t["corpus.label_purity"] = D(&CorpusSpec::label_purity);
    t["corpus.p_sentiment"] = D(&CorpusSpec::p_sentiment);
    t["corpus.p_spurious"] = D(&CorpusSpec::p_spurious);
    t["corpus.p_content"] = D(&CorpusSpec::p_content);
    t["corpus.spur_home_bias"] = D(&CorpusSpec::spur_home_bias);

    t["model.embed_dim"] = [](RunConfig& c, const std::string& v) {
      c.train.model.embed_dim = parse_int(v, "model.embed_dim");
    };
    t["model.hidden_dim"] = [](RunConfig& c, const std::string& v) {
      c.train.model.hidden_dim = parse_int(v, "model.hidden_dim");
    };
    t["model.proj_dim"] = [](RunConfig& c, const std::string& v) {
      c.train.model.proj_dim = parse_int(v, "model.proj_dim");
    };

    t["perturb.sigma2"] = [](RunConfig& c, const std::string& v) {
      c.train.perturb.sigma2 = parse_double(v, "perturb.sigma2");
    };
    t["perturb.epsilon"] = [](RunConfig& c, const std::string& v) {
      c.train.perturb.epsilon = parse_double(v, "perturb.epsilon");
    };
    t["perturb.eta"] = [](RunConfig& c, const std::string& v) {
      c.train.perturb.eta = parse_double(v, "perturb.eta");
    };
    t["perturb.iterations"] = [](RunConfig& c, const std::string& v) {
      c.train.perturb.iterations = parse_int(v, "perturb.iterations");
    };

    t["weights.alpha_adv"] = [](RunConfig& c, const std::string& v) {
      c.train.weights.alpha_adv = parse_double(v, "weights.alpha_adv");
    };
    t["weights.alpha"] = [](RunConfig& c, const std::string& v) {
      c.train.weights.alpha = parse_double(v, "weights.alpha");
    };
    t["weights.lambda_contrast"] = [](RunConfig& c, const std::string& v) {
      c.train.weights.lambda_contrast = parse_double(v, "weights.lambda_contrast");
    };
    t["weights.beta"] = [](RunConfig& c, const std::string& v) {
      c.train.weights.beta = parse_double(v, "weights.beta");
    };
    t["weights.tau"] = [](RunConfig& c, const std::string& v) {
      c.train.weights.tau = parse_double(v, "weights.tau");
    };

    t["train.epochs"] = [](RunConfig& c, const std::string& v) {
      c.train.epochs = parse_int(v, "train.epochs");
    };
    t["train.batch_size"] = [](RunConfig& c, const std::string& v) {
      c.train.batch_size = parse_int(v, "train.batch_size");
    };
    t["train.lr"] = [](RunConfig& c, const std::string& v) {
      c.train.lr = parse_double(v, "train.lr");
    };
    t["train.warmup_fraction"] = [](RunConfig& c, const std::string& v) {
      c.train.warmup_fraction = parse_double(v, "train.warmup_fraction");
    };
    t["train.weight_decay"] = [](RunConfig& c, const std::string& v) {
      c.train.weight_decay = parse_double(v, "train.weight_decay");
    };
    t["train.seed"] = [](RunConfig& c, const std::string& v) {
      c.train.seed = parse_u64(v, "train.seed");
    };
    t["train.method"] = [](RunConfig& c, const std::string& v) {
      try {
        c.train.method = method_from_string(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    };
    t["train.domain_variant"] = [](RunConfig& c, const std::string& v) {
      try {
        c.train.domain_variant = domain_variant_from_string(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    };
    t["train.dann_gamma"] = [](RunConfig& c, const std::string& v) {
      c.train.dann_gamma = parse_double(v, "train.dann_gamma");
    };
    t["train.match_weight"] = [](RunConfig& c, const std::string& v) {
      c.train.match_weight = parse_double(v, "train.match_weight");
    };
    t["train.mmd_bandwidth"] = [](RunConfig& c, const std::string& v) {
      c.train.mmd_bandwidth = parse_double(v, "train.mmd_bandwidth");
    };
    t["train.mask_threshold"] = [](RunConfig& c, const std::string& v) {
      c.train.mask_threshold = parse_double(v, "train.mask_threshold");
    };
    t["train.use_domain_loss"] = [](RunConfig& c, const std::string& v) {
      c.train.ablation.domain = parse_bool(v, "train.use_domain_loss");
    };
    t["train.use_consistency_loss"] = [](RunConfig& c, const std::string& v) {
      c.train.ablation.consistency = parse_bool(v, "train.use_consistency_loss");
    };
    t["train.use_contrastive_loss"] = [](RunConfig& c, const std::string& v) {
      c.train.ablation.contrast = parse_bool(v, "train.use_contrastive_loss");
    };

    t["run.methods"] = [](RunConfig& c, const std::string& v) {
      c.methods.clear();
      for (const std::string& m : split_list(v)) {
        try {
          c.methods.push_back(method_from_string(m));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("config: ") + e.what());
        }
      }
      if (c.methods.empty()) throw ConfigError("config: run.methods is empty");
    };
    t["run.seeds"] = [](RunConfig& c, const std::string& v) {
      c.seeds.clear();
      for (const std::string& s : split_list(v))
        c.seeds.push_back(parse_u64(s, "run.seeds"));
      if (c.seeds.empty()) throw ConfigError("config: run.seeds is empty");
    };
    t["run.out_dir"] = [](RunConfig& c, const std::string& v) { c.out_dir = v; };
    return t;
  }();
  return table;
}

}  // namespace

void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section header at " + where);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at " + where);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config: key '" + key + "' outside any section at " + where);
    const std::string full = section + "." + key;
    auto it = setters().find(full);
    if (it == setters().end())
      throw ConfigError("config: unknown key '" + full + "' at " + where);
    it->second(cfg, value);
  }
  cfg.finalize();
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(cfg, buf.str(), path);
}

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string canonical_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# preset " << cfg.preset << "\n";
  out << "[corpus]\n";
  out << "seed = " << cfg.corpus.seed << "\n";
  out << "source_train = " << cfg.corpus.source_train << "\n";
  out << "target_train = " << cfg.corpus.target_train << "\n";
  out << "validation = " << cfg.corpus.validation << "\n";
  out << "test = " << cfg.corpus.test << "\n";
  out << "classes = " << cfg.corpus.classes << "\n";
  out << "max_len = " << cfg.corpus.max_len << "\n";
  out << "min_len = " << cfg.corpus.min_len << "\n";
  out << "vocab_size = " << cfg.corpus.vocab_size << "\n";
  out << "sentiment_per_class = " << cfg.corpus.sentiment_per_class << "\n";
  out << "filler = " << cfg.corpus.filler << "\n";
  out << "content_per_domain = " << cfg.corpus.content_per_domain << "\n";
  out << "spurious_per_class = " << cfg.corpus.spurious_per_class << "\n";
  out << "shift = " << fmt(cfg.corpus.shift) << "\n";
  out << "label_purity = " << fmt(cfg.corpus.label_purity) << "\n";
  out << "p_sentiment = " << fmt(cfg.corpus.p_sentiment) << "\n";
  out << "p_spurious = " << fmt(cfg.corpus.p_spurious) << "\n";
  out << "p_content = " << fmt(cfg.corpus.p_content) << "\n";
  out << "spur_home_bias = " << fmt(cfg.corpus.spur_home_bias) << "\n";
  out << "[model]\n";
  out << "embed_dim = " << cfg.train.model.embed_dim << "\n";
  out << "hidden_dim = " << cfg.train.model.hidden_dim << "\n";
  out << "proj_dim = " << cfg.train.model.proj_dim << "\n";
  out << "[perturb]\n";
  out << "sigma2 = " << fmt(cfg.train.perturb.sigma2) << "\n";
  out << "epsilon = " << fmt(cfg.train.perturb.epsilon) << "\n";
  out << "eta = " << fmt(cfg.train.perturb.eta) << "\n";
  out << "iterations = " << cfg.train.perturb.iterations << "\n";
  out << "[weights]\n";
  out << "alpha_adv = " << fmt(cfg.train.weights.alpha_adv) << "\n";
  out << "alpha = " << fmt(cfg.train.weights.alpha) << "\n";
  out << "lambda_contrast = " << fmt(cfg.train.weights.lambda_contrast) << "\n";
  out << "beta = " << fmt(cfg.train.weights.beta) << "\n";
  out << "tau = " << fmt(cfg.train.weights.tau) << "\n";
  out << "[train]\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "lr = " << fmt(cfg.train.lr) << "\n";
  out << "warmup_fraction = " << fmt(cfg.train.warmup_fraction) << "\n";
  out << "weight_decay = " << fmt(cfg.train.weight_decay) << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "method = " << to_string(cfg.train.method) << "\n";
  out << "domain_variant = " << to_string(cfg.train.domain_variant) << "\n";
  out << "dann_gamma = " << fmt(cfg.train.dann_gamma) << "\n";
  out << "match_weight = " << fmt(cfg.train.match_weight) << "\n";
  out << "mmd_bandwidth = " << fmt(cfg.train.mmd_bandwidth) << "\n";
  out << "mask_threshold = " << fmt(cfg.train.mask_threshold) << "\n";
  out << "use_domain_loss = " << (cfg.train.ablation.domain ? "true" : "false") << "\n";
  out << "use_consistency_loss = " << (cfg.train.ablation.consistency ? "true" : "false")
      << "\n";
  out << "use_contrastive_loss = " << (cfg.train.ablation.contrast ? "true" : "false")
      << "\n";
  out << "[run]\n";
  std::string methods;
  for (Method m : cfg.methods) methods += (methods.empty() ? "" : ",") + to_string(m);
  out << "methods = " << methods << "\n";
  std::string seeds;
  for (uint64_t s : cfg.seeds)
    seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  out << "seeds = " << seeds << "\n";
  if (!cfg.out_dir.empty()) out << "out_dir = " << cfg.out_dir << "\n";
  return out.str();
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(canonical_text(cfg)); }

}  // namespace dccl
