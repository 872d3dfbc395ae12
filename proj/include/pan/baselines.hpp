#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "pan/eval.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Recommends the globally most frequent training items.
class PopModel {
 public:
  PopModel() = default;
  explicit PopModel(std::vector<double> counts) : counts_(std::move(counts)) {}

  const std::vector<double>& counts() const { return counts_; }

  RankedList rank(const SessionPrefix&, std::size_t k) const { return rank_top_k(counts_, k); }

 private:
  std::vector<double> counts_;
};

// Counts every click of every training prefix: the prefix items plus the
// label, taking each session once through its longest prefix.
inline PopModel fit_pop(const std::vector<SessionPrefix>& train, std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto& s : sessions_from_prefixes(train))
    for (auto item : s) counts.at(item) += 1.0;
  return PopModel(std::move(counts));
}

inline RankedList recommend_pop(const PopModel& m, const SessionPrefix& prefix, std::size_t k) {
  return m.rank(prefix, k);
}

// Item-to-item cosine similarity over session co-occurrence:
// sim(i, j) = cooc(i, j) / sqrt(occ(i) occ(j)), where occ and cooc count
// sessions (each session at most once per item or pair).
class ItemKnnModel {
 public:
  ItemKnnModel() = default;

  explicit ItemKnnModel(std::size_t vocab_size) : occurrences_(vocab_size, 0.0), neighbours_(vocab_size) {}

  void add_session(std::span<const std::size_t> items) {
    std::set<std::size_t> unique(items.begin(), items.end());
    for (auto i : unique) occurrences_.at(i) += 1.0;
    for (auto i : unique)
      for (auto j : unique)
        if (i != j) neighbours_[i][j] += 1.0;
  }

  std::size_t vocab_size() const { return occurrences_.size(); }

  double similarity(std::size_t i, std::size_t j) const {
    if (i >= vocab_size() || j >= vocab_size()) return 0.0;
    auto it = neighbours_[i].find(j);
    if (it == neighbours_[i].end()) return 0.0;
    return it->second / std::sqrt(occurrences_[i] * occurrences_[j]);
  }

  // Scores every item against the last click; the last item itself scores 0.
  // An unseen last item gives an all-zero ranking.
  RankedList rank(const SessionPrefix& prefix, std::size_t k) const {
    std::vector<double> scores(vocab_size(), 0.0);
    if (!prefix.items.empty()) {
      const auto last = prefix.items.back();
      if (last < vocab_size()) {
        for (const auto& [j, cooc] : neighbours_[last]) {
          scores[j] = cooc / std::sqrt(occurrences_[last] * occurrences_[j]);
        }
      }
    }
    return rank_top_k(scores, k);
  }

 private:
  std::vector<double> occurrences_;
  std::vector<std::map<std::size_t, double>> neighbours_;
};

inline ItemKnnModel fit_itemknn(const std::vector<std::vector<std::size_t>>& sessions,
                                std::size_t vocab_size) {
  ItemKnnModel m(vocab_size);
  for (const auto& s : sessions) m.add_session(s);
  return m;
}

inline ItemKnnModel fit_itemknn(const std::vector<SessionPrefix>& train, std::size_t vocab_size) {
  return fit_itemknn(sessions_from_prefixes(train), vocab_size);
}

inline RankedList recommend_itemknn(const ItemKnnModel& m, const SessionPrefix& prefix, std::size_t k) {
  return m.rank(prefix, k);
}

}  // namespace pan
