#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "pan/config.hpp"
#include "pan/errors.hpp"
#include "pan/model.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Binary layout, all integers little-endian:
//   "PANCKPT1"                       8-byte magic
//   u32 version                      kCheckpointVersion
//   u32 n, n x (str key, str value)  hyperparameters
//   u32 n, n x str                   vocabulary tokens in index order
//   u32 n, n x (str name, u32 rows, u32 cols, rows*cols x f64)
// where str is a u32 byte length followed by UTF-8 bytes and f64 is the
// IEEE-754 bit pattern.
inline constexpr std::array<char, 8> kCheckpointMagic = {'P', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Hyperparams hyper;
  Vocab vocab;
  PanParams params;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw CheckpointError("checkpoint truncated");
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::string get_str(std::istream& in) {
  const auto n = get_u32(in);
  if (n > (1u << 24)) throw CheckpointError("checkpoint string length implausible");
  std::string s(n, '\0');
  read_exact(in, s.data(), n);
  return s;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u32(out, kCheckpointVersion);
  const auto hp = hyperparams_to_pairs(ck.hyper);
  detail::put_u32(out, static_cast<std::uint32_t>(hp.size()));
  for (const auto& [k, v] : hp) {
    detail::put_str(out, k);
    detail::put_str(out, v);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(ck.vocab.size()));
  for (const auto& t : ck.vocab.tokens()) detail::put_str(out, t);
  std::uint32_t n_tensors = 0;
  ck.params.for_each_tensor([&](std::string_view, const Matrix&) { ++n_tensors; });
  detail::put_u32(out, n_tensors);
  ck.params.for_each_tensor([&](std::string_view name, const Matrix& m) {
    detail::put_str(out, std::string(name));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double x : m.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
  });
  if (!out) throw CheckpointError("failed writing checkpoint");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  detail::read_exact(in, magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw CheckpointError("not a PAN checkpoint (bad magic)");
  const auto version = detail::get_u32(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  RunConfig hp_config;
  const auto n_hp = detail::get_u32(in);
  for (std::uint32_t i = 0; i < n_hp; ++i) {
    auto key = detail::get_str(in);
    auto value = detail::get_str(in);
    try {
      hp_config.set(key, value);
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint hyperparameters: ") + e.what());
    }
  }
  try {
    ck.hyper = hyperparams_from(hp_config);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint hyperparameters: ") + e.what());
  }
  const auto n_vocab = detail::get_u32(in);
  for (std::uint32_t i = 0; i < n_vocab; ++i) {
    if (ck.vocab.add(detail::get_str(in)) != i) throw CheckpointError("duplicate vocabulary token");
  }
  if (ck.vocab.size() == 0) throw CheckpointError("checkpoint has an empty vocabulary");

  // Build the expected tensor layout, then fill it by name.
  SeededRng shape_rng(0);
  ck.params = init_params(ck.hyper, ck.vocab.size(), shape_rng);
  std::set<std::string> expected;
  ck.params.for_each_tensor([&](std::string_view name, const Matrix&) { expected.emplace(name); });
  const auto n_tensors = detail::get_u32(in);
  if (n_tensors != expected.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(n_tensors) + " tensors, expected " +
                          std::to_string(expected.size()));
  }
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name = detail::get_str(in);
    const auto rows = detail::get_u32(in);
    const auto cols = detail::get_u32(in);
    Matrix* dst = expected.erase(name) ? ck.params.find(name) : nullptr;
    if (!dst) throw CheckpointError("unexpected or duplicate tensor '" + name + "'");
    if (dst->rows() != rows || dst->cols() != cols) {
      throw CheckpointError("tensor '" + name + "' has shape " + Matrix::shape_string(rows, cols) +
                            ", expected " + dst->shape());
    }
    for (double& x : dst->data()) x = std::bit_cast<double>(detail::get_u64(in));
  }
  return ck;
}

inline void save_checkpoint_file(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  save_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  try {
    return load_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace pan
