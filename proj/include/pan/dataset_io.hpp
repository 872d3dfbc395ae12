#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pan/errors.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Prefix files: header `session_id<TAB>items<TAB>timestamps<TAB>label`, with
// items (vocabulary indices) and timestamps space-separated.
inline void write_prefixes(std::ostream& out, const std::vector<SessionPrefix>& examples) {
  out << "session_id\titems\ttimestamps\tlabel\n";
  for (const auto& e : examples) {
    out << e.session_id << '\t';
    for (std::size_t i = 0; i < e.items.size(); ++i) out << (i ? " " : "") << e.items[i];
    out << '\t';
    for (std::size_t i = 0; i < e.timestamps.size(); ++i) out << (i ? " " : "") << e.timestamps[i];
    out << '\t' << e.label << '\n';
  }
}

inline std::vector<SessionPrefix> read_prefixes(std::istream& in, std::size_t vocab_size,
                                                const std::string& source = "prefixes") {
  std::vector<SessionPrefix> out;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(source + ": " + what, line_no); };
  if (!std::getline(in, line) || line != "session_id\titems\ttimestamps\tlabel") {
    line_no = 1;
    throw fail("missing prefix-file header");
  }
  line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split(line, '\t');
    if (fields.size() != 4) throw fail("expected 4 fields");
    SessionPrefix p;
    p.session_id = std::string(fields[0]);
    for (auto tok : detail::split(fields[1], ' ')) {
      auto v = detail::parse_int<std::size_t>(tok);
      if (!v || *v >= vocab_size) throw fail("bad item index '" + std::string(tok) + "'");
      p.items.push_back(*v);
    }
    for (auto tok : detail::split(fields[2], ' ')) {
      auto v = detail::parse_int<std::int64_t>(tok);
      if (!v) throw fail("bad timestamp '" + std::string(tok) + "'");
      p.timestamps.push_back(*v);
    }
    auto label = detail::parse_int<std::size_t>(fields[3]);
    if (!label || *label >= vocab_size) throw fail("bad label");
    p.label = *label;
    if (p.items.size() != p.timestamps.size()) throw fail("items and timestamps differ in length");
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_vocab(std::ostream& out, const Vocab& vocab) {
  out << "index\titem_id\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) out << i << '\t' << vocab.token(i) << '\n';
}

inline Vocab read_vocab(std::istream& in, const std::string& source = "vocab") {
  Vocab vocab;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != "index\titem_id") throw ParseError(source + ": missing header", 1);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split(line, '\t');
    auto idx = fields.size() == 2 ? detail::parse_int<std::size_t>(fields[0]) : std::nullopt;
    if (!idx || *idx != vocab.size() || vocab.contains(std::string(fields[1]))) {
      throw ParseError(source + ": malformed vocabulary row", line_no);
    }
    vocab.add(std::string(fields[1]));
  }
  return vocab;
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + p.string() + "' for writing");
  return out;
}
inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  return in;
}
}  // namespace detail

// dir/{vocab,train,valid,test}.tsv
inline void write_dataset(const std::filesystem::path& dir, const DatasetBundle& b) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "vocab.tsv");
    write_vocab(out, b.vocab);
  }
  const std::pair<const char*, const std::vector<SessionPrefix>*> parts[] = {
      {"train.tsv", &b.train}, {"valid.tsv", &b.validation}, {"test.tsv", &b.test}};
  for (const auto& [name, examples] : parts) {
    auto out = detail::open_out(dir / name);
    write_prefixes(out, *examples);
  }
}

inline DatasetBundle read_dataset(const std::filesystem::path& dir) {
  DatasetBundle b;
  {
    auto in = detail::open_in(dir / "vocab.tsv");
    b.vocab = read_vocab(in, (dir / "vocab.tsv").string());
  }
  auto load = [&](const char* name) {
    auto in = detail::open_in(dir / name);
    return read_prefixes(in, b.vocab.size(), (dir / name).string());
  };
  b.train = load("train.tsv");
  b.validation = load("valid.tsv");
  b.test = load("test.tsv");
  return b;
}

}  // namespace pan
