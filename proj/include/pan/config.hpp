#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pan/errors.hpp"
#include "pan/eval.hpp"
#include "pan/model.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Every accepted key with its default value.
inline const std::vector<std::pair<std::string, std::string>>& config_defaults() {
  static const std::vector<std::pair<std::string, std::string>> defaults = {
      // model and training
      {"dim", "128"},
      {"batch_size", "128"},
      {"lr", "0.001"},
      {"lr_decay", "0.1"},
      {"lr_decay_every", "10"},
      {"dropout", "0.5"},
      {"epochs", "30"},
      {"seed", "42"},
      {"interest_mode", "full"},
      {"fusion_mode", "gated"},
      {"loss_mode", "bce"},
      {"shared_output_embedding", "true"},
      {"weight_init_std", "0.05"},
      {"embedding_init_std", "0.002"},
      {"k", "20"},
      // files
      {"train_log", ""},
      {"test_log", ""},
      {"format", "canonical-tsv"},
      {"dataset_dir", "data"},
      {"checkpoint", "pan.ckpt"},
      {"epoch_log", "epochs.tsv"},
      {"report", ""},
      // preprocessing
      {"min_item_support", "5"},
      {"valid_fraction", "0.1"},
      // evaluation / recommendation
      {"model", "pan"},
      {"session", ""},
      // synthetic corpora
      {"n_items", "100"},
      {"n_sessions", "2000"},
      {"n_test_sessions", "400"},
      {"drift_rate", "0.5"},
      {"long_gap_prob", "0.3"},
      {"short_gap_mean", "60"},
      {"long_gap_mean", "14400"},
      {"n_topics", "0"},
      {"topic_size", "0"},
      {"min_length", "2"},
      {"max_length", "10"},
      {"noise", "0.1"},
  };
  return defaults;
}

inline bool is_config_key(std::string_view key) {
  for (const auto& [k, v] : config_defaults())
    if (k == key) return true;
  return false;
}

// key = value settings with defaults for every absent key.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& [k, v] : config_defaults()) values_[k] = v;
  }

  void set(const std::string& key, std::string value) {
    if (!is_config_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = std::move(value);
  }

  // Lines of `key = value`; '#' starts a comment.
  void load(std::istream& in, const std::string& source = "config") {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      std::string key(trim(trimmed.substr(0, eq)));
      std::string value(trim(trimmed.substr(eq + 1)));
      if (!is_config_key(key)) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
      }
      values_[key] = std::move(value);
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    load(in, path);
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    double v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t count(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
      throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + s + "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline Hyperparams hyperparams_from(const RunConfig& c) {
  Hyperparams hp;
  hp.dim = c.count("dim");
  hp.batch_size = c.count("batch_size");
  hp.lr = c.real("lr");
  hp.lr_decay = c.real("lr_decay");
  hp.lr_decay_every = c.count("lr_decay_every");
  hp.dropout = c.real("dropout");
  hp.epochs = c.count("epochs");
  hp.seed = c.count("seed");
  hp.interest_mode = parse_interest_mode(c.str("interest_mode"));
  hp.fusion_mode = parse_fusion_mode(c.str("fusion_mode"));
  hp.loss_mode = parse_loss_mode(c.str("loss_mode"));
  hp.shared_output_embedding = c.flag("shared_output_embedding");
  hp.weight_init_std = c.real("weight_init_std");
  hp.embedding_init_std = c.real("embedding_init_std");
  hp.eval_k = c.count("k");
  hp.validate();
  return hp;
}

// Hyperparameters as the key/value pairs hyperparams_from() reads back.
inline std::vector<std::pair<std::string, std::string>> hyperparams_to_pairs(const Hyperparams& hp) {
  return {
      {"dim", std::to_string(hp.dim)},
      {"batch_size", std::to_string(hp.batch_size)},
      {"lr", format_real(hp.lr)},
      {"lr_decay", format_real(hp.lr_decay)},
      {"lr_decay_every", std::to_string(hp.lr_decay_every)},
      {"dropout", format_real(hp.dropout)},
      {"epochs", std::to_string(hp.epochs)},
      {"seed", std::to_string(hp.seed)},
      {"interest_mode", to_string(hp.interest_mode)},
      {"fusion_mode", to_string(hp.fusion_mode)},
      {"loss_mode", to_string(hp.loss_mode)},
      {"shared_output_embedding", hp.shared_output_embedding ? "true" : "false"},
      {"weight_init_std", format_real(hp.weight_init_std)},
      {"embedding_init_std", format_real(hp.embedding_init_std)},
      {"k", std::to_string(hp.eval_k)},
  };
}

inline SynthConfig synth_config_from(const RunConfig& c) {
  SynthConfig s;
  s.n_items = c.count("n_items");
  s.n_sessions = c.count("n_sessions") + c.count("n_test_sessions");
  s.drift_rate = c.real("drift_rate");
  s.gaps.long_gap_prob = c.real("long_gap_prob");
  s.gaps.short_mean_seconds = c.real("short_gap_mean");
  s.gaps.long_mean_seconds = c.real("long_gap_mean");
  s.n_topics = c.count("n_topics");
  s.topic_size = c.count("topic_size");
  s.min_length = c.count("min_length");
  s.max_length = c.count("max_length");
  s.noise = c.real("noise");
  return s;
}

}  // namespace pan
