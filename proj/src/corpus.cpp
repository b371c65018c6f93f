#include "dccl/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace dccl {

bool Corpus::labeled() const {
  return !examples.empty() &&
         std::all_of(examples.begin(), examples.end(),
                     [](const Example& e) { return e.y.has_value(); });
}

int Corpus::domain() const {
  check_arg(!examples.empty(), "corpus: empty, no domain");
  const int d = examples.front().d;
  for (const Example& e : examples) {
    check_arg(e.d == d, "corpus: mixed domains");
  }
  return d;
}

void CorpusSpec::validate() const {
  check_arg(classes >= 2, "corpus: classes must be >= 2");
  check_arg(source_train > 0 && target_train > 0 && validation > 0 && test > 0,
            "corpus: all split sizes must be positive");
  check_arg(min_len >= 2 && min_len <= max_len, "corpus: need 2 <= min_len <= max_len");
  check_arg(sentiment_per_class >= 1 && filler >= 1 && content_per_domain >= 1 &&
                spurious_per_class >= 1,
            "corpus: vocabulary partitions must be non-empty");
  check_arg(vocab_used() <= vocab_size,
            "corpus: partition overflow, " + std::to_string(vocab_used()) +
                " tokens do not fit vocab_size " + std::to_string(vocab_size));
  check_arg(shift >= 0.0 && shift <= 1.0, "corpus: shift must be in [0,1]");
  check_arg(label_purity >= 0.0 && label_purity <= 1.0,
            "corpus: label_purity must be in [0,1]");
  check_arg(spur_home_bias >= 0.0 && spur_home_bias <= 1.0,
            "corpus: spur_home_bias must be in [0,1]");
  check_arg(p_sentiment > 0.0 && p_spurious >= 0.0 && p_content >= 0.0 &&
                p_sentiment + p_spurious + p_content <= 1.0,
            "corpus: slot probabilities must be nonnegative and sum to <= 1");
}

int CorpusSpec::vocab_used() const {
  return kReservedTokens + classes * sentiment_per_class + filler +
         2 * content_per_domain + 2 * classes * spurious_per_class;
}

namespace {

// Vocabulary block offsets derived from the spec; fixed layout so corpora are
// reproducible from (spec, seed) alone.
struct VocabLayout {
  int classes;
  int sent0, sent_per_class;
  int fill0, filler;
  int cont0[2], content;
  int spur0[2], spur_per_class;

  explicit VocabLayout(const CorpusSpec& s) {
    classes = s.classes;
    sent_per_class = s.sentiment_per_class;
    content = s.content_per_domain;
    spur_per_class = s.spurious_per_class;
    int at = kReservedTokens;
    sent0 = at;
    at += classes * sent_per_class;
    fill0 = at;
    filler = s.filler;
    at += filler;
    cont0[0] = at;
    at += content;
    cont0[1] = at;
    at += content;
    spur0[0] = at;
    at += classes * spur_per_class;
    spur0[1] = at;
  }

  int sentiment(int cls, int j) const { return sent0 + cls * sent_per_class + j; }
  int fill(int j) const { return fill0 + j; }
  int cont(int d, int j) const { return cont0[d] + j; }
  int spur(int d, int cls, int j) const {
    return spur0[d] + cls * spur_per_class + j;
  }
};

std::vector<int> stratified_labels(int n, int classes, std::mt19937_64& rng) {
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) labels.push_back(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

Example generate_example(const CorpusSpec& spec, const VocabLayout& vocab, int domain,
                         int label, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len_dist(spec.min_len, spec.max_len);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> cls_dist(0, spec.classes - 1);

  const int len = len_dist(rng);
  int k_sent = std::max(1, static_cast<int>(std::lround(spec.p_sentiment * len)));
  int k_spur = static_cast<int>(std::lround(spec.p_spurious * len));
  int k_cont = static_cast<int>(std::lround(spec.p_content * len));
  while (k_sent + k_spur + k_cont > len) {
    if (k_spur > 0)
      --k_spur;
    else if (k_cont > 0)
      --k_cont;
    else
      --k_sent;
  }
  const int k_fill = len - k_sent - k_spur - k_cont;

  // Sentiment slots: mostly the label's class, repaired to a strict majority
  // so the label is always recoverable from the shared tokens.
  std::vector<int> sent_cls(static_cast<size_t>(k_sent));
  for (int& c : sent_cls) c = coin(rng) < spec.label_purity ? label : cls_dist(rng);
  auto counts_of = [&](std::vector<int>& v) {
    std::vector<int> counts(static_cast<size_t>(spec.classes), 0);
    for (int c : v) ++counts[static_cast<size_t>(c)];
    return counts;
  };
  std::vector<int> counts = counts_of(sent_cls);
  auto needs_repair = [&]() {
    for (int c = 0; c < spec.classes; ++c)
      if (c != label && counts[static_cast<size_t>(c)] >= counts[static_cast<size_t>(label)])
        return true;
    return false;
  };
  for (size_t i = 0; i < sent_cls.size() && needs_repair(); ++i) {
    if (sent_cls[i] != label) {
      --counts[static_cast<size_t>(sent_cls[i])];
      sent_cls[i] = label;
      ++counts[static_cast<size_t>(label)];
    }
  }

  std::vector<int> tokens;
  tokens.reserve(static_cast<size_t>(len));
  std::uniform_int_distribution<int> sent_tok(0, spec.sentiment_per_class - 1);
  std::uniform_int_distribution<int> fill_tok(0, spec.filler - 1);
  std::uniform_int_distribution<int> cont_tok(0, spec.content_per_domain - 1);
  std::uniform_int_distribution<int> spur_tok(0, spec.spurious_per_class - 1);

  for (int c : sent_cls) tokens.push_back(vocab.sentiment(c, sent_tok(rng)));
  for (int i = 0; i < k_spur; ++i) {
    const int home = coin(rng) < spec.spur_home_bias ? domain : 1 - domain;
    int cls;
    if (home == domain && coin(rng) < spec.shift) {
      cls = label;  // label-aligned only in the token's home domain
    } else {
      cls = cls_dist(rng);
    }
    tokens.push_back(vocab.spur(home, cls, spur_tok(rng)));
  }
  for (int i = 0; i < k_cont; ++i) tokens.push_back(vocab.cont(domain, cont_tok(rng)));
  for (int i = 0; i < k_fill; ++i) tokens.push_back(vocab.fill(fill_tok(rng)));
  std::shuffle(tokens.begin(), tokens.end(), rng);

  Example ex;
  ex.tokens = std::move(tokens);
  ex.d = domain;
  ex.y = label;
  return ex;
}

Corpus generate_split(const CorpusSpec& spec, const VocabLayout& vocab, int domain,
                      int n, bool keep_labels, uint64_t split_id) {
  std::mt19937_64 rng(sub_seed(spec.seed, "corpus-split", static_cast<uint64_t>(domain),
                               split_id));
  std::vector<int> labels = stratified_labels(n, spec.classes, rng);
  Corpus corpus;
  corpus.examples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Example ex = generate_example(spec, vocab, domain, labels[static_cast<size_t>(i)], rng);
    if (!keep_labels) ex.y.reset();  // target training data is unlabeled
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace

CorpusSet generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const VocabLayout vocab(spec);
  CorpusSet set;
  set.source_train = generate_split(spec, vocab, 0, spec.source_train, true, 0);
  set.source_val = generate_split(spec, vocab, 0, spec.validation, true, 1);
  set.source_test = generate_split(spec, vocab, 0, spec.test, true, 2);
  set.target_train = generate_split(spec, vocab, 1, spec.target_train, false, 3);
  set.target_test = generate_split(spec, vocab, 1, spec.test, true, 4);
  return set;
}

// ---- stats & masking -------------------------------------------------------

DomainTokenStats DomainTokenStats::compute(const Corpus& source, const Corpus& target,
                                           int vocab_size, double smooth_add) {
  check_arg(smooth_add > 0.0, "stats: smooth_add must be positive");
  DomainTokenStats stats;
  stats.smooth_add = smooth_add;
  stats.counts[0].assign(static_cast<size_t>(vocab_size), 0);
  stats.counts[1].assign(static_cast<size_t>(vocab_size), 0);
  for (const Corpus* c : {&source, &target}) {
    for (const Example& ex : c->examples) {
      for (int t : ex.tokens) {
        check_arg(t >= 0 && t < vocab_size,
                  "stats: token " + std::to_string(t) + " outside vocabulary");
        ++stats.counts[ex.d][static_cast<size_t>(t)];
      }
    }
  }
  return stats;
}

double frequency_ratio(int token, int domain, const DomainTokenStats& stats) {
  check_arg(domain == 0 || domain == 1, "frequency_ratio: domain must be 0 or 1");
  check_arg(token >= 0 && token < static_cast<int>(stats.counts[0].size()),
            "frequency_ratio: token outside vocabulary");
  const double own = static_cast<double>(stats.counts[domain][static_cast<size_t>(token)]);
  const double other =
      static_cast<double>(stats.counts[1 - domain][static_cast<size_t>(token)]);
  return (own + stats.smooth_add) / (other + stats.smooth_add);
}

MaskResult mask_domain_tokens(const Example& ex, const DomainTokenStats& stats,
                              double threshold) {
  MaskResult result;
  result.example = ex;
  result.total = static_cast<int>(ex.tokens.size());
  for (int& t : result.example.tokens) {
    if (frequency_ratio(t, ex.d, stats) > threshold) {
      t = kMaskToken;
      ++result.masked;
    }
  }
  return result;
}

Corpus mask_corpus(const Corpus& corpus, const DomainTokenStats& stats,
                   double threshold) {
  Corpus out;
  out.examples.reserve(corpus.examples.size());
  for (const Example& ex : corpus.examples)
    out.examples.push_back(mask_domain_tokens(ex, stats, threshold).example);
  return out;
}

double corpus_masked_fraction(const Corpus& corpus, const DomainTokenStats& stats,
                              double threshold) {
  long masked = 0;
  long total = 0;
  for (const Example& ex : corpus.examples) {
    MaskResult r = mask_domain_tokens(ex, stats, threshold);
    masked += r.masked;
    total += r.total;
  }
  return total == 0 ? 0.0 : static_cast<double>(masked) / static_cast<double>(total);
}

// ---- batching ---------------------------------------------------------------

namespace {
std::atomic<long> g_label_reads[2] = {0, 0};
}

long label_reads(int domain) { return g_label_reads[domain].load(); }

void reset_label_read_counters() {
  g_label_reads[0].store(0);
  g_label_reads[1].store(0);
}

const Eigen::VectorXi& TokenBatch::require_labels() const {
  check_runtime(labels.has_value(), "batch: labels required but absent");
  g_label_reads[domain].fetch_add(1);
  return *labels;
}

TokenBatch make_batch(const std::vector<Example>& examples, size_t begin, size_t count,
                      int max_len) {
  check_arg(count > 0 && begin + count <= examples.size(), "make_batch: bad slice");
  TokenBatch batch;
  const auto n = static_cast<Eigen::Index>(count);
  batch.tokens = Eigen::MatrixXi::Constant(n, max_len, kPadToken);
  batch.pad_mask = Eigen::MatrixXd::Zero(n, max_len);
  batch.domain = examples[begin].d;

  bool all_labeled = true;
  for (size_t i = 0; i < count; ++i) {
    const Example& ex = examples[begin + i];
    check_arg(ex.d == batch.domain, "make_batch: mixed domains in one batch");
    const auto len =
        std::min<Eigen::Index>(static_cast<Eigen::Index>(ex.tokens.size()), max_len);
    for (Eigen::Index t = 0; t < len; ++t) {
      batch.tokens(static_cast<Eigen::Index>(i), t) = ex.tokens[static_cast<size_t>(t)];
      batch.pad_mask(static_cast<Eigen::Index>(i), t) = 1.0;
    }
    all_labeled = all_labeled && ex.y.has_value();
  }
  // A batch is labeled only when every example is; anything less counts as
  // unlabeled so label consumers fail loudly instead of guessing.
  if (all_labeled) {
    Eigen::VectorXi y(n);
    for (size_t i = 0; i < count; ++i)
      y(static_cast<Eigen::Index>(i)) = *examples[begin + i].y;
    batch.labels = std::move(y);
  }
  return batch;
}

Batcher::Batcher(const Corpus& corpus, int batch_size, int max_len, uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), max_len_(max_len), seed_(seed) {
  check_arg(batch_size >= 2, "batcher: batch size must be >= 2");
  check_arg(corpus.size() >= static_cast<size_t>(batch_size),
            "batcher: corpus smaller than one batch (" + std::to_string(corpus.size()) +
                " < " + std::to_string(batch_size) + ")");
  corpus.domain();  // rejects mixed-domain corpora up front
  batches_per_epoch_ = static_cast<int>(corpus.size()) / batch_size;
}

std::vector<TokenBatch> Batcher::epoch(int epoch_index) const {
  std::vector<size_t> order(corpus_->size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(sub_seed(seed_, "batch-shuffle", static_cast<uint64_t>(epoch_index)));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Example> shuffled;
  shuffled.reserve(corpus_->size());
  for (size_t idx : order) shuffled.push_back(corpus_->examples[idx]);

  std::vector<TokenBatch> batches;
  batches.reserve(static_cast<size_t>(batches_per_epoch_));
  for (int b = 0; b < batches_per_epoch_; ++b) {
    batches.push_back(make_batch(shuffled, static_cast<size_t>(b) * batch_size_,
                                 static_cast<size_t>(batch_size_), max_len_));
  }
  return batches;
}

std::vector<TokenBatch> sequential_batches(const Corpus& corpus, int batch_size,
                                           int max_len) {
  check_arg(batch_size >= 1, "sequential_batches: batch size must be >= 1");
  check_arg(!corpus.empty(), "sequential_batches: empty corpus");
  std::vector<TokenBatch> batches;
  for (size_t at = 0; at < corpus.size(); at += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(static_cast<size_t>(batch_size), corpus.size() - at);
    batches.push_back(make_batch(corpus.examples, at, count, max_len));
  }
  return batches;
}

// ---- IO ---------------------------------------------------------------------

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  check_runtime(out.good(), "save_corpus: cannot open " + path);
  for (const Example& ex : corpus.examples) {
    nlohmann::json j;
    j["tokens"] = ex.tokens;
    j["y"] = ex.y.has_value() ? nlohmann::json(*ex.y) : nlohmann::json(nullptr);
    j["d"] = ex.d;
    out << j.dump() << "\n";
  }
  check_runtime(out.good(), "save_corpus: write failed for " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  check_runtime(in.good(), "load_corpus: cannot open " + path);
  Corpus corpus;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_corpus: malformed record at " + where + ": " +
                               e.what());
    }
    check_runtime(j.is_object() && j.contains("tokens") && j.contains("y") &&
                      j.contains("d"),
                  "load_corpus: missing fields at " + where);
    Example ex;
    check_runtime(j["tokens"].is_array(), "load_corpus: tokens not a list at " + where);
    for (const auto& t : j["tokens"]) {
      check_runtime(t.is_number_integer() && t.get<long>() >= 0,
                    "load_corpus: bad token id at " + where);
      ex.tokens.push_back(t.get<int>());
    }
    if (!j["y"].is_null()) {
      check_runtime(j["y"].is_number_integer(), "load_corpus: bad label at " + where);
      ex.y = j["y"].get<int>();
    }
    check_runtime(j["d"].is_number_integer(), "load_corpus: bad domain at " + where);
    ex.d = j["d"].get<int>();
    check_runtime(ex.d == 0 || ex.d == 1,
                  "load_corpus: domain must be 0 or 1 at " + where);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace dccl
