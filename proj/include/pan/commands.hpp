#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pan/baselines.hpp"
#include "pan/checkpoint.hpp"
#include "pan/config.hpp"
#include "pan/dataset_io.hpp"
#include "pan/errors.hpp"
#include "pan/eval.hpp"
#include "pan/model.hpp"
#include "pan/session_data.hpp"
#include "pan/train.hpp"

namespace pan {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitDivergence = 3 };

namespace detail {

inline std::vector<Session> read_log(const std::string& path, LogFormat format) {
  if (path.empty()) throw ConfigError("missing log path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return parse_event_log(in, format);
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace detail

// Reads train/test logs, filters, augments and splits them into dataset_dir.
inline DatasetStats cmd_preprocess(const RunConfig& cfg, std::ostream& out) {
  const auto format = parse_log_format(cfg.str("format"));
  auto train = detail::read_log(cfg.str("train_log"), format);
  auto test = detail::read_log(cfg.str("test_log"), format);
  auto filtered = filter_dataset(std::move(train), std::move(test), cfg.count("min_item_support"));
  if (filtered.test.empty()) throw EmptyDatasetError("no test sessions survive filtering");
  SeededRng rng(cfg.count("seed"));
  DatasetBundle bundle = build_dataset(filtered, cfg.real("valid_fraction"), rng);
  write_dataset(cfg.str("dataset_dir"), bundle);

  const DatasetStats st = compute_stats(filtered, bundle.vocab);
  out << "statistic\tvalue\n"
      << "train\t" << st.train_examples << '\n'
      << "test\t" << st.test_examples << '\n'
      << "clicks\t" << st.clicks << '\n'
      << "items\t" << st.items << '\n'
      << "avg_length\t" << std::fixed << std::setprecision(2) << st.avg_length << '\n'
      << std::defaultfloat << "train_examples_after_split\t" << bundle.train.size() << '\n'
      << "validation_examples\t" << bundle.validation.size() << '\n';
  return st;
}

// Writes a synthetic corpus: the first n_sessions to train_log, the rest to
// test_log.
inline void cmd_synthesize(const RunConfig& cfg, std::ostream& out) {
  const SynthConfig sc = synth_config_from(cfg);
  SeededRng rng(cfg.count("seed"));
  SyntheticCorpus corpus = synthesize_sessions(sc, rng);
  const std::size_t n_train = cfg.count("n_sessions");
  std::vector<Session> train(corpus.sessions.begin(), corpus.sessions.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Session> test(corpus.sessions.begin() + static_cast<std::ptrdiff_t>(n_train), corpus.sessions.end());
  for (const auto& [key, sessions] : {std::pair{"train_log", &train}, std::pair{"test_log", &test}}) {
    const auto& path = cfg.str(key);
    if (path.empty()) throw ConfigError(std::string("synthesize: missing ") + key);
    std::ostringstream buf;
    write_event_log(buf, *sessions);
    detail::write_text(path, buf.str());
  }
  out << "wrote " << train.size() << " train and " << test.size() << " test sessions\n";
}

inline TrainResult cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Hyperparams hp = hyperparams_from(cfg);
  const DatasetBundle data = read_dataset(cfg.str("dataset_dir"));
  std::ostringstream log;
  log << "epoch\tloss\tval_recall\tval_mrr\tlr\n";
  out << "epoch\tloss\tval_recall\tval_mrr\tlr\n";
  TrainResult result = train(data, hp, [&](const EpochLog& e) {
    std::ostringstream row;
    row << e.epoch << '\t' << format_real(e.loss) << '\t' << format_real(e.val_recall) << '\t'
        << format_real(e.val_mrr) << '\t' << format_real(e.lr) << '\n';
    log << row.str();
    out << row.str() << std::flush;
  });
  save_checkpoint_file(cfg.str("checkpoint"), Checkpoint{hp, data.vocab, result.params});
  detail::write_text(cfg.str("epoch_log"), log.str());
  return result;
}

inline EvalReport evaluate_model(const std::string& model, const DatasetBundle& data,
                                 const std::string& checkpoint_path, std::size_t k) {
  if (model == "pop") {
    return evaluate(fit_pop(data.train, data.vocab.size()), data.test, k);
  }
  if (model == "itemknn") {
    return evaluate(fit_itemknn(data.train, data.vocab.size()), data.test, k);
  }
  if (model == "pan") {
    const Checkpoint ck = load_checkpoint_file(checkpoint_path);
    if (!(ck.vocab == data.vocab)) {
      throw DataError("checkpoint vocabulary does not match the dataset vocabulary");
    }
    return evaluate(PanRecommender(ck.params, ck.hyper), data.test, k);
  }
  throw ConfigError("unknown model '" + model + "' (expected pan, pop or itemknn)");
}

// Evaluates on the test split; writes the TSV report to `report` or `out`.
inline EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  const DatasetBundle data = read_dataset(cfg.str("dataset_dir"));
  const EvalReport report = evaluate_model(cfg.str("model"), data, cfg.str("checkpoint"), cfg.count("k"));
  std::ostringstream buf;
  write_report_tsv(buf, report);
  if (cfg.str("report").empty()) {
    out << buf.str();
  } else {
    detail::write_text(cfg.str("report"), buf.str());
  }
  return report;
}

// "item@timestamp,item@timestamp,..." in click order.
inline SessionPrefix parse_inline_session(const std::string& text, const Vocab& vocab) {
  if (text.empty()) throw ConfigError("recommend: empty session");
  SessionPrefix p;
  for (auto part : detail::split(text, ',')) {
    auto at = part.rfind('@');
    if (at == std::string_view::npos) {
      throw ConfigError("recommend: expected item@timestamp, got '" + std::string(part) + "'");
    }
    auto ts = detail::parse_int<std::int64_t>(part.substr(at + 1));
    if (!ts || *ts < 0) throw ConfigError("recommend: bad timestamp in '" + std::string(part) + "'");
    p.items.push_back(vocab.index_of(std::string(part.substr(0, at))));
    p.timestamps.push_back(*ts);
  }
  for (std::size_t i = 1; i < p.timestamps.size(); ++i) {
    if (p.timestamps[i] < p.timestamps[i - 1]) throw ConfigError("recommend: timestamps must not decrease");
  }
  return p;
}

struct Recommendation {
  std::string item;
  double probability = 0.0;
};

inline std::vector<Recommendation> cmd_recommend(const RunConfig& cfg, std::ostream& out) {
  const Checkpoint ck = load_checkpoint_file(cfg.str("checkpoint"));
  const SessionPrefix prefix = parse_inline_session(cfg.str("session"), ck.vocab);
  SeededRng unused(0);
  const ForwardCache fwd = forward(prefix, ck.params, ck.hyper, unused, false);
  const RankedList top = rank_top_k(fwd.probs(), cfg.count("k"));
  std::vector<Recommendation> recs;
  out << "item\tprobability\n";
  for (std::size_t i = 0; i < top.items.size(); ++i) {
    recs.push_back({ck.vocab.token(top.items[i]), top.scores[i]});
    out << recs.back().item << '\t' << format_real(recs.back().probability) << '\n';
  }
  return recs;
}

// Runs one subcommand, mapping failures to exit codes.
inline int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    if (name == "preprocess") cmd_preprocess(cfg, out);
    else if (name == "synthesize") cmd_synthesize(cfg, out);
    else if (name == "train") cmd_train(cfg, out);
    else if (name == "evaluate") cmd_evaluate(cfg, out);
    else if (name == "recommend") cmd_recommend(cfg, out);
    else {
      err << "unknown command '" << name << "'\n";
      return kExitUsage;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace pan
