#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "dccl/corpus.hpp"
#include "dccl/eval.hpp"

using namespace dccl;

namespace {

CorpusSpec small_spec() {
  CorpusSpec spec;
  spec.seed = 42;
  spec.source_train = 240;
  spec.target_train = 240;
  spec.validation = 90;
  spec.test = 240;
  return spec;
}

// Bag-of-tokens count features for the linear transfer probe.
Eigen::MatrixXd count_features(const Corpus& c, int vocab) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.size()), vocab);
  for (size_t i = 0; i < c.size(); ++i)
    for (int t : c.examples[i].tokens) x(static_cast<Eigen::Index>(i), t) += 1.0;
  return x;
}

Eigen::VectorXi labels_of(const Corpus& c) {
  Eigen::VectorXi y(static_cast<Eigen::Index>(c.size()));
  for (size_t i = 0; i < c.size(); ++i) y(static_cast<Eigen::Index>(i)) = *c.examples[i].y;
  return y;
}

}  // namespace

TEST_CASE("same seed generates bitwise-identical corpora") {
  const CorpusSet a = generate_corpus(small_spec());
  const CorpusSet b = generate_corpus(small_spec());
  REQUIRE(a.source_train.size() == b.source_train.size());
  for (size_t i = 0; i < a.source_train.size(); ++i) {
    CHECK(a.source_train.examples[i].tokens == b.source_train.examples[i].tokens);
    CHECK(a.source_train.examples[i].y == b.source_train.examples[i].y);
  }
  CHECK(a.target_test.examples.back().tokens == b.target_test.examples.back().tokens);
}

TEST_CASE("label counts stay within 1% of balance") {
  const CorpusSpec spec = small_spec();
  const CorpusSet set = generate_corpus(spec);
  for (const Corpus* c : {&set.source_train, &set.source_val, &set.target_test}) {
    std::map<int, int> counts;
    for (const Example& ex : c->examples) counts[*ex.y]++;
    const double expected =
        static_cast<double>(c->size()) / static_cast<double>(spec.classes);
    for (auto& [label, n] : counts) {
      CHECK(std::abs(n - expected) <= 0.01 * static_cast<double>(c->size()) + 1.0);
    }
  }
}

TEST_CASE("target training corpus carries no labels at all") {
  const CorpusSet set = generate_corpus(small_spec());
  for (const Example& ex : set.target_train.examples) CHECK(!ex.y.has_value());
  CHECK(set.source_train.labeled());
  CHECK(!set.target_train.labeled());
}

TEST_CASE("every label is the strict majority class of its sentiment tokens") {
  CorpusSpec spec = small_spec();
  const CorpusSet set = generate_corpus(spec);
  const int sent_lo = kReservedTokens;
  const int sent_hi = sent_lo + spec.classes * spec.sentiment_per_class;
  for (const Corpus* c : {&set.source_train, &set.target_test}) {
    for (const Example& ex : c->examples) {
      std::vector<int> counts(static_cast<size_t>(spec.classes), 0);
      for (int t : ex.tokens) {
        if (t >= sent_lo && t < sent_hi)
          counts[static_cast<size_t>((t - sent_lo) / spec.sentiment_per_class)]++;
      }
      const int y = *ex.y;
      for (int cl = 0; cl < spec.classes; ++cl) {
        if (cl != y) CHECK(counts[static_cast<size_t>(y)] > counts[static_cast<size_t>(cl)]);
      }
    }
  }
}

TEST_CASE("content tokens never leak into the other domain") {
  CorpusSpec spec = small_spec();
  const CorpusSet set = generate_corpus(spec);
  const int cont0_lo = kReservedTokens + spec.classes * spec.sentiment_per_class +
                       spec.filler;
  const int cont1_lo = cont0_lo + spec.content_per_domain;
  const int cont1_hi = cont1_lo + spec.content_per_domain;
  for (const Example& ex : set.source_train.examples) {
    for (int t : ex.tokens) CHECK(!(t >= cont1_lo && t < cont1_hi));
  }
  for (const Example& ex : set.target_train.examples) {
    for (int t : ex.tokens) CHECK(!(t >= cont0_lo && t < cont1_lo));
  }
}

TEST_CASE("partition overflow against the vocabulary is rejected") {
  CorpusSpec spec = small_spec();
  spec.vocab_size = spec.vocab_used() - 1;
  CHECK_THROWS_WITH_AS(generate_corpus(spec), doctest::Contains("overflow"),
                       std::invalid_argument);
}

TEST_CASE("zero shift leaves no transfer gap for a source-trained probe") {
  CorpusSpec spec = small_spec();
  spec.classes = 2;
  spec.shift = 0.0;
  const CorpusSet set = generate_corpus(spec);
  const Eigen::MatrixXd x_train = count_features(set.source_train, spec.vocab_size);
  const LinearProbe probe = train_hinge_probe(x_train, labels_of(set.source_train));
  const double src_err =
      probe_error(probe, count_features(set.source_test, spec.vocab_size),
                  labels_of(set.source_test));
  const double tgt_err =
      probe_error(probe, count_features(set.target_test, spec.vocab_size),
                  labels_of(set.target_test));
  CHECK(tgt_err - src_err < 0.05);  // sampling noise only
}

TEST_CASE("spurious tokens correlate with labels only inside their home domain") {
  CorpusSpec spec = small_spec();
  spec.shift = 0.7;
  const CorpusSet set = generate_corpus(spec);
  const int spur0_lo = kReservedTokens + spec.classes * spec.sentiment_per_class +
                       spec.filler + 2 * spec.content_per_domain;

  // Fraction of source-home spurious occurrences whose class block matches
  // the example label, counted in each domain.
  auto aligned_fraction = [&](const Corpus& corpus) {
    long aligned = 0, total = 0;
    for (const Example& ex : corpus.examples) {
      for (int t : ex.tokens) {
        if (t < spur0_lo || t >= spur0_lo + spec.classes * spec.spurious_per_class)
          continue;
        ++total;
        const int cls = (t - spur0_lo) / spec.spurious_per_class;
        if (cls == *ex.y) ++aligned;
      }
    }
    REQUIRE(total > 50);
    return static_cast<double>(aligned) / static_cast<double>(total);
  };

  // In the home domain: shift + (1 - shift) / classes. Elsewhere: 1 / classes.
  const double expected_home = spec.shift + (1.0 - spec.shift) / spec.classes;
  CHECK(aligned_fraction(set.source_train) == doctest::Approx(expected_home).epsilon(0.1));
  CHECK(aligned_fraction(set.target_test) ==
        doctest::Approx(1.0 / spec.classes).epsilon(0.25));
}

TEST_CASE("frequency ratio follows the smoothed count formula") {
  DomainTokenStats stats;
  stats.smooth_add = 1.0;
  stats.counts[0].assign(16, 0);
  stats.counts[1].assign(16, 0);

  SUBCASE("token absent everywhere scores the smoothing baseline") {
    CHECK(frequency_ratio(3, 0, stats) == 1.0);
    CHECK(frequency_ratio(3, 1, stats) == 1.0);
  }
  SUBCASE("9 in-domain vs 1 elsewhere scores 5, strictly below the threshold") {
    stats.counts[0][3] = 9;
    stats.counts[1][3] = 1;
    CHECK(frequency_ratio(3, 0, stats) == 5.0);
    Example ex;
    ex.tokens = {3};
    ex.d = 0;
    CHECK(mask_domain_tokens(ex, stats, 5.0).masked == 0);  // strict inequality
  }
  SUBCASE("10 vs 1 scores 5.5 and is masked") {
    stats.counts[0][3] = 10;
    stats.counts[1][3] = 1;
    CHECK(frequency_ratio(3, 0, stats) == 5.5);
    Example ex;
    ex.tokens = {3};
    ex.d = 0;
    const MaskResult r = mask_domain_tokens(ex, stats, 5.0);
    CHECK(r.masked == 1);
    CHECK(r.example.tokens[0] == kMaskToken);
  }
}

TEST_CASE("frequency ratio matches a naive recount on a generated corpus") {
  CorpusSpec spec = small_spec();
  const CorpusSet set = generate_corpus(spec);
  const DomainTokenStats stats = DomainTokenStats::compute(
      set.source_train, set.target_train, spec.vocab_size);

  std::map<int, long> naive[2];
  for (const Corpus* c : {&set.source_train, &set.target_train}) {
    for (const Example& ex : c->examples)
      for (int t : ex.tokens) naive[ex.d][t]++;
  }
  for (int token = 0; token < spec.vocab_size; ++token) {
    for (int d : {0, 1}) {
      const double expected = (static_cast<double>(naive[d][token]) + 1.0) /
                              (static_cast<double>(naive[1 - d][token]) + 1.0);
      CHECK(frequency_ratio(token, d, stats) == expected);
    }
  }
}

TEST_CASE("masking is idempotent and reports fractions") {
  CorpusSpec spec = small_spec();
  const CorpusSet set = generate_corpus(spec);
  const DomainTokenStats stats = DomainTokenStats::compute(
      set.source_train, set.target_train, spec.vocab_size);

  const Corpus masked = mask_corpus(set.source_train, stats, 5.0);
  const Corpus twice = mask_corpus(masked, stats, 5.0);
  for (size_t i = 0; i < masked.size(); ++i) {
    CHECK(masked.examples[i].tokens == twice.examples[i].tokens);
  }

  const double fraction = corpus_masked_fraction(set.source_train, stats, 5.0);
  CHECK(fraction > 0.0);
  CHECK(fraction < 0.6);
  MESSAGE("corpus masked fraction at threshold 5: ", fraction);

  SUBCASE("no token above an infinite threshold, example unchanged") {
    const Example& ex = set.source_train.examples.front();
    const MaskResult r =
        mask_domain_tokens(ex, stats, std::numeric_limits<double>::infinity());
    CHECK(r.masked == 0);
    CHECK(r.fraction() == 0.0);
    CHECK(r.example.tokens == ex.tokens);
  }
}

TEST_CASE("batches are domain-pure, cover each example at most once, reproducible") {
  CorpusSpec spec = small_spec();
  const CorpusSet set = generate_corpus(spec);
  Batcher batcher(set.source_train, 32, spec.max_len, 9001);

  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<std::string> seen;
    const auto batches = batcher.epoch(epoch);
    CHECK(batches.size() == static_cast<size_t>(batcher.batches_per_epoch()));
    for (const TokenBatch& b : batches) {
      CHECK(b.domain == 0);
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        std::string key;
        for (Eigen::Index t = 0; t < b.max_len(); ++t)
          key += std::to_string(b.tokens(i, t)) + ",";
        CHECK(seen.insert(key).second);  // no example twice in one epoch
      }
    }
  }

  Batcher again(set.source_train, 32, spec.max_len, 9001);
  const auto x = batcher.epoch(5);
  const auto y = again.epoch(5);
  REQUIRE(x.size() == y.size());
  for (size_t i = 0; i < x.size(); ++i) CHECK(x[i].tokens == y[i].tokens);

  CHECK_THROWS_WITH_AS(Batcher(set.source_val, 1000, spec.max_len, 1),
                       doctest::Contains("smaller"), std::invalid_argument);
}

TEST_CASE("corpus files round-trip losslessly") {
  CorpusSpec spec = small_spec();
  spec.source_train = 40;
  spec.target_train = 40;
  const CorpusSet set = generate_corpus(spec);
  const std::string path = "test_corpus_roundtrip.jsonl";

  save_corpus(set.target_train, path);  // unlabeled: null y on every line
  const Corpus loaded = load_corpus(path);
  REQUIRE(loaded.size() == set.target_train.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.examples[i].tokens == set.target_train.examples[i].tokens);
    CHECK(!loaded.examples[i].y.has_value());
    CHECK(loaded.examples[i].d == 1);
  }
  std::remove(path.c_str());
}

TEST_CASE("loader rejects bad records with their line number") {
  const std::string path = "test_corpus_bad.jsonl";
  {
    std::ofstream out(path);
    out << R"({"tokens":[2,3],"y":1,"d":0})" << "\n";
    out << R"({"tokens":[2,3],"y":null,"d":2})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2"),
                       std::runtime_error);
  {
    std::ofstream out(path);
    out << R"({"tokens":[2,3],"y":1,"d":0})" << "\n";
    out << "not json at all\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2"),
                       std::runtime_error);
  std::remove(path.c_str());
}
