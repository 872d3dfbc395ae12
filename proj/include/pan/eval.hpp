#pragma once

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pan/matrix.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Items in descending score order, ties broken by ascending item index.
struct RankedList {
  std::vector<std::size_t> items;
  std::vector<double> scores;

  // 1-based position of item, or 0 when absent.
  std::size_t rank_of(std::size_t item) const {
    auto it = std::find(items.begin(), items.end(), item);
    return it == items.end() ? 0 : static_cast<std::size_t>(it - items.begin()) + 1;
  }
};

// Top-k of scores (all of them when k >= scores.size()).
inline RankedList rank_top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  RankedList out;
  out.scores.reserve(k);
  for (auto i : order) out.scores.push_back(scores[i]);
  out.items = std::move(order);
  return out;
}

inline RankedList rank_top_k(const Matrix& scores, std::size_t k) {
  return rank_top_k(std::span<const double>(scores.data()), k);
}

namespace detail {
inline void check_metric_inputs(std::span<const RankedList> rankings,
                                std::span<const std::size_t> labels, std::size_t k) {
  if (rankings.empty()) throw std::invalid_argument("metric: no examples");
  if (rankings.size() != labels.size()) {
    throw std::invalid_argument("metric: rankings and labels differ in length");
  }
  if (k == 0) throw std::invalid_argument("metric: k must be positive");
}
}  // namespace detail

// Fraction of examples whose label is ranked within the top k.
inline double recall_at_k(std::span<const RankedList> rankings, std::span<const std::size_t> labels,
                          std::size_t k = 20) {
  detail::check_metric_inputs(rankings, labels, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto r = rankings[i].rank_of(labels[i]);
    if (r != 0 && r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

// Mean reciprocal rank, counting ranks beyond k as zero.
inline double mrr_at_k(std::span<const RankedList> rankings, std::span<const std::size_t> labels,
                       std::size_t k = 20) {
  detail::check_metric_inputs(rankings, labels, k);
  double total = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto r = rankings[i].rank_of(labels[i]);
    if (r != 0 && r <= k) total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(rankings.size());
}

struct GroupMetrics {
  double recall = 0.0;
  double mrr = 0.0;
  std::size_t count = 0;
  friend bool operator==(const GroupMetrics&, const GroupMetrics&) = default;
};

struct EvalReport {
  std::size_t k = 20;
  GroupMetrics overall;
  GroupMetrics short_sessions;  // prefix length <= 5
  GroupMetrics long_sessions;   // prefix length > 5
  std::map<std::size_t, GroupMetrics> by_length;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline constexpr std::size_t kShortSessionMaxLength = 5;

// Anything with `RankedList rank(const SessionPrefix&, std::size_t k) const`.
template <typename R>
concept Recommender = requires(const R& r, const SessionPrefix& p, std::size_t k) {
  { r.rank(p, k) } -> std::convertible_to<RankedList>;
};

template <Recommender R>
EvalReport evaluate(const R& model, std::span<const SessionPrefix> examples, std::size_t k = 20) {
  EvalReport report;
  report.k = k;
  struct Acc {
    std::size_t hits = 0;
    double rr = 0.0;
    std::size_t count = 0;
  };
  Acc all, shorts, longs;
  std::map<std::size_t, Acc> lengths;
  for (const auto& ex : examples) {
    const RankedList ranked = model.rank(ex, k);
    const auto r = ranked.rank_of(ex.label);
    const bool hit = r != 0 && r <= k;
    const double rr = hit ? 1.0 / static_cast<double>(r) : 0.0;
    for (Acc* a : {&all, ex.length() <= kShortSessionMaxLength ? &shorts : &longs, &lengths[ex.length()]}) {
      a->hits += hit ? 1 : 0;
      a->rr += rr;
      a->count += 1;
    }
  }
  auto finish = [](const Acc& a) {
    GroupMetrics g;
    g.count = a.count;
    if (a.count > 0) {
      g.recall = static_cast<double>(a.hits) / static_cast<double>(a.count);
      g.mrr = a.rr / static_cast<double>(a.count);
    }
    return g;
  };
  report.overall = finish(all);
  report.short_sessions = finish(shorts);
  report.long_sessions = finish(longs);
  for (const auto& [len, acc] : lengths) report.by_length[len] = finish(acc);
  return report;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// metric<TAB>group<TAB>value rows: overall, short/long and per-length groups.
inline void write_report_tsv(std::ostream& out, const EvalReport& r) {
  const std::string recall = "recall@" + std::to_string(r.k);
  const std::string mrr = "mrr@" + std::to_string(r.k);
  out << "metric\tgroup\tvalue\n";
  auto group = [&](const std::string& name, const GroupMetrics& g) {
    out << recall << '\t' << name << '\t' << format_real(g.recall) << '\n';
    out << mrr << '\t' << name << '\t' << format_real(g.mrr) << '\n';
    out << "n_examples\t" << name << '\t' << g.count << '\n';
  };
  group("all", r.overall);
  group("short", r.short_sessions);
  group("long", r.long_sessions);
  for (const auto& [len, g] : r.by_length) group("length=" + std::to_string(len), g);
}

}  // namespace pan
