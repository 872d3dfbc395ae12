#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "pan/eval.hpp"
#include "pan/rng.hpp"

using namespace pan;

namespace {

// Ranks the label at a fixed position.
RankedList ranking_with_label_at(std::size_t label, std::size_t rank, std::size_t vocab) {
  RankedList r;
  for (std::size_t i = 0; i < vocab; ++i)
    if (i != label) r.items.push_back(i);
  r.items.insert(r.items.begin() + static_cast<std::ptrdiff_t>(rank - 1), label);
  r.scores.assign(vocab, 0.0);
  return r;
}

// Rates items by a fixed score table, scores keyed by item.
struct TableModel {
  std::vector<double> scores;
  RankedList rank(const SessionPrefix&, std::size_t k) const { return rank_top_k(scores, k); }
};

struct OracleModel {
  std::size_t vocab;
  bool adversarial;
  RankedList rank(const SessionPrefix& p, std::size_t k) const {
    std::vector<double> s(vocab, 0.5);
    s[p.label] = adversarial ? 0.0 : 1.0;
    return rank_top_k(s, k);
  }
};

SessionPrefix prefix_of_length(std::size_t n, std::size_t label) {
  SessionPrefix p;
  p.session_id = "s";
  for (std::size_t i = 0; i < n; ++i) {
    p.items.push_back(0);
    p.timestamps.push_back(static_cast<std::int64_t>(i));
  }
  p.label = label;
  return p;
}

}  // namespace

TEST(Metrics, RankThreeIsHitRankTwentyOneIsNot) {
  std::vector<RankedList> r = {ranking_with_label_at(7, 3, 30)};
  std::vector<std::size_t> labels = {7};
  EXPECT_DOUBLE_EQ(recall_at_k(r, labels, 20), 1.0);
  EXPECT_DOUBLE_EQ(mrr_at_k(r, labels, 20), 1.0 / 3.0);

  r = {ranking_with_label_at(7, 21, 30)};
  EXPECT_DOUBLE_EQ(recall_at_k(r, labels, 20), 0.0);
  EXPECT_DOUBLE_EQ(mrr_at_k(r, labels, 20), 0.0);
}

TEST(Metrics, MatchesEnumerationOracle) {
  SeededRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t vocab = 5 + rng.uniform_index(40);
    const std::size_t n = 1 + rng.uniform_index(20);
    const std::size_t k = 1 + rng.uniform_index(vocab);
    std::vector<RankedList> rankings;
    std::vector<std::size_t> labels;
    double hits = 0, rr = 0;
    for (std::size_t e = 0; e < n; ++e) {
      std::vector<std::size_t> perm(vocab);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      const std::size_t label = rng.uniform_index(vocab);
      std::size_t pos = 0;
      while (perm[pos] != label) ++pos;
      if (pos < k) {
        hits += 1;
        rr += 1.0 / static_cast<double>(pos + 1);
      }
      rankings.push_back({perm, std::vector<double>(vocab, 0.0)});
      labels.push_back(label);
    }
    EXPECT_NEAR(recall_at_k(rankings, labels, k), hits / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(mrr_at_k(rankings, labels, k), rr / static_cast<double>(n), 1e-12);
  }
}

TEST(Metrics, RejectInvalidInput) {
  std::vector<RankedList> r = {ranking_with_label_at(0, 1, 3)};
  std::vector<std::size_t> none;
  std::vector<std::size_t> two = {0, 1};
  std::vector<std::size_t> one = {0};
  EXPECT_THROW(recall_at_k({}, none, 20), std::invalid_argument);
  EXPECT_THROW(recall_at_k(r, two, 20), std::invalid_argument);
  EXPECT_THROW(mrr_at_k(r, one, 0), std::invalid_argument);
}

TEST(RankTopK, OrdersByScoreThenIndex) {
  std::vector<double> s = {0.1, 0.9, 0.5, 0.9};
  auto r = rank_top_k(s, 3);
  EXPECT_EQ(r.items, (std::vector<std::size_t>{1, 3, 2}));
  EXPECT_EQ(rank_top_k(s, 10).items.size(), 4u);
}

TEST(Evaluate, AllCorrectAndAdversarialModels) {
  std::vector<SessionPrefix> ex;
  for (std::size_t i = 0; i < 10; ++i) ex.push_back(prefix_of_length(1 + i, i % 30));
  auto good = evaluate(OracleModel{30, false}, ex, 20);
  EXPECT_DOUBLE_EQ(good.overall.recall, 1.0);
  EXPECT_DOUBLE_EQ(good.overall.mrr, 1.0);
  auto bad = evaluate(OracleModel{30, true}, ex, 20);
  EXPECT_DOUBLE_EQ(bad.overall.recall, 0.0);
  EXPECT_DOUBLE_EQ(bad.overall.mrr, 0.0);
}

TEST(Evaluate, ShortAndLongGroupsSplitAtFive) {
  std::vector<SessionPrefix> ex = {prefix_of_length(5, 0), prefix_of_length(6, 0), prefix_of_length(2, 1)};
  // Item 0 ranks first, item 1 ranks second.
  auto report = evaluate(TableModel{{1.0, 0.5, 0.0}}, ex, 1);
  EXPECT_EQ(report.short_sessions.count, 2u);
  EXPECT_EQ(report.long_sessions.count, 1u);
  EXPECT_DOUBLE_EQ(report.short_sessions.recall, 0.5);
  EXPECT_DOUBLE_EQ(report.long_sessions.recall, 1.0);
  EXPECT_EQ(report.by_length.size(), 3u);
  EXPECT_EQ(report.by_length.at(2).recall, 0.0);
  EXPECT_EQ(report.overall.count, 3u);
}

TEST(Evaluate, KEqualToVocabGivesFullRecall) {
  SeededRng rng(8);
  std::vector<double> scores(15);
  for (double& s : scores) s = rng.uniform();
  std::vector<SessionPrefix> ex;
  for (std::size_t i = 0; i < 15; ++i) ex.push_back(prefix_of_length(3, i));
  EXPECT_DOUBLE_EQ(evaluate(TableModel{scores}, ex, 15).overall.recall, 1.0);
}

TEST(Evaluate, InvariantToExampleOrder) {
  SeededRng rng(9);
  std::vector<double> scores(25);
  for (double& s : scores) s = rng.uniform();
  std::vector<SessionPrefix> ex;
  for (std::size_t i = 0; i < 40; ++i) ex.push_back(prefix_of_length(1 + rng.uniform_index(9), rng.uniform_index(25)));
  auto a = evaluate(TableModel{scores}, ex, 5);
  rng.shuffle(std::span<SessionPrefix>(ex));
  auto b = evaluate(TableModel{scores}, ex, 5);
  EXPECT_EQ(a.overall.count, b.overall.count);
  EXPECT_NEAR(a.overall.recall, b.overall.recall, 1e-12);
  EXPECT_NEAR(a.overall.mrr, b.overall.mrr, 1e-12);
}

TEST(Report, TsvLayout) {
  std::vector<SessionPrefix> ex = {prefix_of_length(2, 0), prefix_of_length(7, 1)};
  auto report = evaluate(TableModel{{1.0, 0.5}}, ex, 20);
  std::ostringstream os;
  write_report_tsv(os, report);
  const std::string text = os.str();
  EXPECT_EQ(text.rfind("metric\tgroup\tvalue\n", 0), 0u);
  EXPECT_NE(text.find("recall@20\tall\t1\n"), std::string::npos);
  EXPECT_NE(text.find("mrr@20\tall\t0.75\n"), std::string::npos);
  EXPECT_NE(text.find("n_examples\tshort\t1\n"), std::string::npos);
  EXPECT_NE(text.find("mrr@20\tlength=7\t0.5\n"), std::string::npos);
}
