#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pan/errors.hpp"
#include "pan/rng.hpp"

namespace pan {

struct Event {
  std::string session_id;
  std::string item_id;
  std::int64_t timestamp = 0;  // seconds since epoch
};

struct Session {
  std::string session_id;
  std::vector<Event> events;  // non-decreasing timestamps

  std::size_t size() const { return events.size(); }
};

// Session after vocabulary encoding.
struct IndexedSession {
  std::string session_id;
  std::vector<std::size_t> items;
  std::vector<std::int64_t> timestamps;
};

// One training or test example: the first n clicks and the (n+1)-th item.
struct SessionPrefix {
  std::string session_id;
  std::vector<std::size_t> items;
  std::vector<std::int64_t> timestamps;
  std::size_t label = 0;

  std::size_t length() const { return items.size(); }
  friend bool operator==(const SessionPrefix&, const SessionPrefix&) = default;
};

// Bijection between item tokens and dense indices [0, size()).
class Vocab {
 public:
  std::size_t add(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const std::string& token) const {
    auto idx = find(token);
    if (!idx) throw VocabError("unknown item token '" + token + "'");
    return *idx;
  }

  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.contains(token); }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct DatasetBundle {
  Vocab vocab;
  std::vector<SessionPrefix> train;
  std::vector<SessionPrefix> validation;
  std::vector<SessionPrefix> test;
};

enum class LogFormat { canonical_tsv, yoochoose_csv };

inline LogFormat parse_log_format(std::string_view name) {
  if (name == "canonical-tsv") return LogFormat::canonical_tsv;
  if (name == "yoochoose-csv") return LogFormat::yoochoose_csv;
  throw ConfigError("unknown log format '" + std::string(name) +
                    "' (expected canonical-tsv or yoochoose-csv)");
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

// Orders ids numerically when both are digit strings, else lexicographically.
inline bool session_id_less(std::string_view a, std::string_view b) {
  const bool na = detail::all_digits(a);
  const bool nb = detail::all_digits(b);
  if (na && nb) {
    auto strip = [](std::string_view s) {
      auto p = s.find_first_not_of('0');
      return p == std::string_view::npos ? std::string_view("0") : s.substr(p);
    };
    a = strip(a);
    b = strip(b);
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
  if (na != nb) return na;
  return a < b;
}

// "2014-04-07T10:51:09.277Z" -> 1396867869. Fractional seconds are truncated;
// the trailing Z is optional and no other offsets are accepted.
inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  auto y = detail::parse_int<int>(s.substr(0, 4));
  auto mo = detail::parse_int<unsigned>(s.substr(5, 2));
  auto d = detail::parse_int<unsigned>(s.substr(8, 2));
  auto hh = detail::parse_int<int>(s.substr(11, 2));
  auto mm = detail::parse_int<int>(s.substr(14, 2));
  auto ss = detail::parse_int<int>(s.substr(17, 2));
  if (!y || !mo || !d || !hh || !mm || !ss) return std::nullopt;
  if (*hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
  std::string_view rest = s.substr(19);
  if (!rest.empty() && rest.front() == '.') {
    std::size_t i = 1;
    while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
    if (i == 1) return std::nullopt;
    rest = rest.substr(i);
  }
  if (!(rest.empty() || rest == "Z")) return std::nullopt;
  year_month_day ymd{year{*y}, month{*mo}, day{*d}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + *hh * 3600 + *mm * 60 + *ss;
}

// Groups events into sessions ordered by session id, each sorted by time with
// ties kept in input order.
inline std::vector<Session> group_sessions(std::vector<Event> events) {
  std::map<std::string, std::vector<Event>, decltype(&session_id_less)> grouped(&session_id_less);
  for (auto& e : events) grouped[e.session_id].push_back(std::move(e));
  std::vector<Session> out;
  out.reserve(grouped.size());
  for (auto& [id, evs] : grouped) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    out.push_back(Session{id, std::move(evs)});
  }
  return out;
}

inline std::vector<Session> parse_event_log(std::istream& in, LogFormat format) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (format == LogFormat::canonical_tsv) {
      if (!header_seen) {
        if (line != "session_id\titem_id\ttimestamp") {
          throw ParseError("expected header 'session_id<TAB>item_id<TAB>timestamp'", line_no);
        }
        header_seen = true;
        continue;
      }
      auto fields = detail::split(line, '\t');
      if (fields.size() != 3) {
        throw ParseError("expected 3 tab-separated fields, got " + std::to_string(fields.size()),
                         line_no);
      }
      if (fields[0].empty() || fields[1].empty()) throw ParseError("empty id field", line_no);
      auto ts = detail::parse_int<std::int64_t>(fields[2]);
      if (!ts) throw ParseError("unparseable timestamp '" + std::string(fields[2]) + "'", line_no);
      if (*ts < 0) throw ParseError("negative timestamp", line_no);
      events.push_back({std::string(fields[0]), std::string(fields[1]), *ts});
    } else {
      auto fields = detail::split(line, ',');
      if (fields.size() != 4) {
        throw ParseError("expected 4 comma-separated fields, got " + std::to_string(fields.size()),
                         line_no);
      }
      if (fields[0].empty() || fields[2].empty()) throw ParseError("empty id field", line_no);
      auto ts = parse_iso8601(fields[1]);
      if (!ts) throw ParseError("unparseable timestamp '" + std::string(fields[1]) + "'", line_no);
      if (*ts < 0) throw ParseError("negative timestamp", line_no);
      events.push_back({std::string(fields[0]), std::string(fields[2]), *ts});
    }
  }
  return group_sessions(std::move(events));
}

inline void write_event_log(std::ostream& out, const std::vector<Session>& sessions) {
  out << "session_id\titem_id\ttimestamp\n";
  for (const auto& s : sessions)
    for (const auto& e : s.events) out << s.session_id << '\t' << e.item_id << '\t' << e.timestamp << '\n';
}

struct FilteredSessions {
  std::vector<Session> train;
  std::vector<Session> test;
};

// Drops rare items and length-1 sessions from train until neither rule
// changes anything, then restricts test to surviving training items.
inline FilteredSessions filter_dataset(std::vector<Session> train, std::vector<Session> test,
                                       std::size_t min_item_support = 5) {
  auto drop_short = [](std::vector<Session>& sessions) {
    std::size_t before = sessions.size();
    std::erase_if(sessions, [](const Session& s) { return s.size() <= 1; });
    return sessions.size() != before;
  };

  bool changed = true;
  while (changed) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& s : train)
      for (const auto& e : s.events) ++counts[e.item_id];
    changed = false;
    for (auto& s : train) {
      std::size_t before = s.events.size();
      std::erase_if(s.events, [&](const Event& e) { return counts[e.item_id] < min_item_support; });
      changed |= s.events.size() != before;
    }
    changed |= drop_short(train);
  }
  if (train.empty()) throw EmptyDatasetError("no training sessions survive filtering");

  std::set<std::string> known;
  for (const auto& s : train)
    for (const auto& e : s.events) known.insert(e.item_id);
  for (auto& s : test) {
    std::erase_if(s.events, [&](const Event& e) { return !known.contains(e.item_id); });
  }
  drop_short(test);
  return {std::move(train), std::move(test)};
}

// Assigns indices in order of first appearance.
inline Vocab build_vocab(const std::vector<Session>& sessions) {
  Vocab vocab;
  for (const auto& s : sessions)
    for (const auto& e : s.events) vocab.add(e.item_id);
  return vocab;
}

inline IndexedSession encode_session(const Session& s, const Vocab& vocab) {
  IndexedSession out{s.session_id, {}, {}};
  out.items.reserve(s.size());
  out.timestamps.reserve(s.size());
  for (const auto& e : s.events) {
    out.items.push_back(vocab.index_of(e.item_id));
    out.timestamps.push_back(e.timestamp);
  }
  return out;
}

// ([s1], s2), ([s1, s2], s3), ..., ([s1..s_{n-1}], s_n). Sessions shorter
// than two clicks yield nothing.
inline std::vector<SessionPrefix> augment_prefixes(const IndexedSession& s) {
  std::vector<SessionPrefix> out;
  if (s.items.size() < 2) return out;
  out.reserve(s.items.size() - 1);
  for (std::size_t n = 1; n < s.items.size(); ++n) {
    out.push_back(SessionPrefix{s.session_id,
                                {s.items.begin(), s.items.begin() + n},
                                {s.timestamps.begin(), s.timestamps.begin() + n},
                                s.items[n]});
  }
  return out;
}

inline std::vector<SessionPrefix> augment_prefixes(const Session& s, const Vocab& vocab) {
  return augment_prefixes(encode_session(s, vocab));
}

inline std::vector<SessionPrefix> augment_all(const std::vector<Session>& sessions,
                                              const Vocab& vocab) {
  std::vector<SessionPrefix> out;
  for (const auto& s : sessions) {
    auto p = augment_prefixes(s, vocab);
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

// Holds out round(fraction * #sessions) whole sessions for validation.
// Relative order of examples is preserved on both sides.
inline std::pair<std::vector<SessionPrefix>, std::vector<SessionPrefix>> train_valid_split(
    const std::vector<SessionPrefix>& examples, double fraction, SeededRng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& e : examples)
    if (seen.insert(e.session_id).second) ids.push_back(e.session_id);
  rng.shuffle(std::span<std::string>(ids));
  const auto n_valid = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  std::set<std::string> valid_ids(ids.begin(), ids.begin() + std::min(n_valid, ids.size()));
  std::pair<std::vector<SessionPrefix>, std::vector<SessionPrefix>> out;
  for (const auto& e : examples) (valid_ids.contains(e.session_id) ? out.second : out.first).push_back(e);
  return out;
}

// Reassembles full index sequences from augmented prefixes: the longest
// prefix of each session plus its label.
inline std::vector<std::vector<std::size_t>> sessions_from_prefixes(
    const std::vector<SessionPrefix>& examples) {
  std::vector<std::string> order;
  std::unordered_map<std::string, const SessionPrefix*> longest;
  for (const auto& e : examples) {
    auto [it, inserted] = longest.try_emplace(e.session_id, &e);
    if (inserted) order.push_back(e.session_id);
    else if (e.length() > it->second->length()) it->second = &e;
  }
  std::vector<std::vector<std::size_t>> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const auto* p = longest[id];
    auto items = p->items;
    items.push_back(p->label);
    out.push_back(std::move(items));
  }
  return out;
}

struct DatasetStats {
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::size_t clicks = 0;
  std::size_t items = 0;
  double avg_length = 0.0;  // clicks per retained session
};

inline DatasetStats compute_stats(const FilteredSessions& data, const Vocab& vocab) {
  DatasetStats st;
  std::size_t sessions = 0;
  for (const auto* group : {&data.train, &data.test}) {
    for (const auto& s : *group) {
      st.clicks += s.size();
      ++sessions;
    }
  }
  for (const auto& s : data.train) st.train_examples += s.size() - 1;
  for (const auto& s : data.test) st.test_examples += s.size() - 1;
  st.items = vocab.size();
  st.avg_length = sessions == 0 ? 0.0 : static_cast<double>(st.clicks) / static_cast<double>(sessions);
  return st;
}

// Full preprocessing: filter, vocabulary from training sessions, prefix
// augmentation, session-level validation split.
inline DatasetBundle build_dataset(const FilteredSessions& data, double valid_fraction,
                                   SeededRng& rng) {
  DatasetBundle b;
  b.vocab = build_vocab(data.train);
  auto train = augment_all(data.train, b.vocab);
  std::tie(b.train, b.validation) = train_valid_split(train, valid_fraction, rng);
  b.test = augment_all(data.test, b.vocab);
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

struct GapModel {
  double long_gap_prob = 0.3;
  double short_mean_seconds = 60.0;
  double long_mean_seconds = 4.0 * 3600.0;
};

struct SynthConfig {
  std::size_t n_items = 100;
  std::size_t n_sessions = 1000;
  double drift_rate = 0.5;
  GapModel gaps;
  std::size_t n_topics = 0;    // 0: max(1, n_items / 10)
  std::size_t topic_size = 0;  // 0: about 1.5 * n_items / n_topics, capped at n_items
  std::size_t min_length = 2;
  std::size_t max_length = 10;
  double noise = 0.1;  // chance of a random in-topic item instead of the successor
  std::int64_t start_time = 1'400'000'000;
  std::int64_t session_spacing_seconds = 600;
};

struct SyntheticCorpus {
  std::vector<Session> sessions;
  std::vector<std::vector<std::size_t>> event_topics;  // parallel to sessions[i].events
  std::vector<std::vector<std::size_t>> topic_items;   // each topic's item cycle
  std::vector<std::vector<bool>> long_gap_before;      // parallel to events; false for first
};

inline std::string synthetic_item_token(std::size_t item) { return std::to_string(item + 1); }

// Latent-topic session generator. Each topic walks its own cycle of items;
// topics overlap on items, so the current topic is only identifiable from
// the recent clicks. A topic can only change after a long gap, which it does
// with probability drift_rate.
inline SyntheticCorpus synthesize_sessions(const SynthConfig& cfg, SeededRng& rng) {
  if (cfg.n_items < 2) throw ConfigError("synthesize_sessions: n_items must be >= 2");
  if (cfg.n_sessions < 1) throw ConfigError("synthesize_sessions: n_sessions must be >= 1");
  if (cfg.min_length < 2 || cfg.max_length < cfg.min_length) {
    throw ConfigError("synthesize_sessions: need 2 <= min_length <= max_length");
  }
  const std::size_t n_topics = cfg.n_topics ? cfg.n_topics : std::max<std::size_t>(1, cfg.n_items / 10);
  const std::size_t base = (cfg.n_items + n_topics - 1) / n_topics;
  const std::size_t topic_size = std::min(
      cfg.n_items, cfg.topic_size ? cfg.topic_size : std::max<std::size_t>(2, (3 * base + 1) / 2));

  SyntheticCorpus corpus;
  corpus.topic_items.resize(n_topics);
  for (std::size_t i = 0; i < cfg.n_items; ++i) corpus.topic_items[i % n_topics].push_back(i);
  for (auto& items : corpus.topic_items) {
    std::set<std::size_t> members(items.begin(), items.end());
    while (items.size() < topic_size) {
      auto candidate = static_cast<std::size_t>(rng.uniform_index(cfg.n_items));
      if (members.insert(candidate).second) items.push_back(candidate);
    }
    rng.shuffle(std::span<std::size_t>(items));
  }

  std::int64_t clock = cfg.start_time;
  for (std::size_t s = 0; s < cfg.n_sessions; ++s) {
    Session session{std::to_string(s + 1), {}};
    std::vector<std::size_t> topics;
    std::vector<bool> long_gaps;
    const std::size_t length =
        cfg.min_length + static_cast<std::size_t>(rng.uniform_index(cfg.max_length - cfg.min_length + 1));
    std::size_t topic = static_cast<std::size_t>(rng.uniform_index(n_topics));
    std::size_t pos = static_cast<std::size_t>(rng.uniform_index(corpus.topic_items[topic].size()));
    std::int64_t t = clock;
    for (std::size_t k = 0; k < length; ++k) {
      bool long_gap = false;
      if (k > 0) {
        long_gap = rng.bernoulli(cfg.gaps.long_gap_prob);
        const double mean = long_gap ? cfg.gaps.long_mean_seconds : cfg.gaps.short_mean_seconds;
        t += std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(rng.exponential(mean))));
        const auto& cycle = corpus.topic_items[topic];
        if (long_gap && n_topics > 1 && rng.bernoulli(cfg.drift_rate)) {
          topic = (topic + 1 + static_cast<std::size_t>(rng.uniform_index(n_topics - 1))) % n_topics;
          pos = static_cast<std::size_t>(rng.uniform_index(corpus.topic_items[topic].size()));
        } else if (rng.bernoulli(cfg.noise)) {
          pos = static_cast<std::size_t>(rng.uniform_index(cycle.size()));
        } else {
          pos = (pos + 1) % cycle.size();
        }
      }
      const std::size_t item = corpus.topic_items[topic][pos];
      session.events.push_back({session.session_id, synthetic_item_token(item), t});
      topics.push_back(topic);
      long_gaps.push_back(long_gap);
    }
    clock = t + cfg.session_spacing_seconds;
    corpus.sessions.push_back(std::move(session));
    corpus.event_topics.push_back(std::move(topics));
    corpus.long_gap_before.push_back(std::move(long_gaps));
  }
  return corpus;
}

}  // namespace pan
