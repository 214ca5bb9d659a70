#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "taco/nn.hpp"

namespace taco {

inline constexpr char kCkptMagic[8] = {'T', 'A', 'C', 'O', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

namespace detail {
template <typename T>
void wr(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void rd(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  TACO_CHECK(f.gcount() == static_cast<std::streamsize>(sizeof(T)), DataError,
             "truncated checkpoint");
}
inline void wr_str(std::ofstream& f, const std::string& s) {
  wr(f, static_cast<uint64_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string rd_str(std::ifstream& f) {
  uint64_t n = 0;
  rd(f, n);
  TACO_CHECK(n < (1u << 26), DataError, "implausible string length in checkpoint");
  std::string s(n, '\0');
  f.read(s.data(), static_cast<std::streamsize>(n));
  TACO_CHECK(f.gcount() == static_cast<std::streamsize>(n), DataError,
             "truncated checkpoint");
  return s;
}
}  // namespace detail

// All parameter tensors plus a config echo; optimizer state is not saved.
template <typename S>
void save_checkpoint(const nn::ParamStore<S>& ps, const std::string& config_echo,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  TACO_CHECK(f.good(), DataError, "cannot write checkpoint: " + path);
  f.write(kCkptMagic, 8);
  detail::wr(f, kCkptVersion);
  detail::wr_str(f, config_echo);
  const auto& all = ps.all();
  detail::wr(f, static_cast<uint64_t>(all.size()));
  for (const auto& p : all) {
    detail::wr_str(f, p->name);
    detail::wr(f, static_cast<uint32_t>(sizeof(S)));
    const auto& shape = p->value.shape();
    detail::wr(f, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) detail::wr(f, d);
    f.write(reinterpret_cast<const char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.numel() * sizeof(S)));
  }
  TACO_CHECK(f.good(), DataError, "checkpoint write failed: " + path);
}

// Returns the config echo. Every tensor in the file must match a store entry
// by name and shape, and cover the store exactly.
template <typename S>
std::string load_checkpoint(nn::ParamStore<S>& ps, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  TACO_CHECK(f.good(), DataError, "cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  TACO_CHECK(f.gcount() == 8 && std::memcmp(magic, kCkptMagic, 8) == 0, DataError,
             "not a checkpoint file: " + path);
  uint32_t version = 0;
  detail::rd(f, version);
  TACO_CHECK(version == kCkptVersion, DataError, "unsupported checkpoint version");
  const std::string echo = detail::rd_str(f);
  uint64_t count = 0;
  detail::rd(f, count);
  TACO_CHECK(count == ps.all().size(), DataError,
             "checkpoint parameter count mismatch");
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = detail::rd_str(f);
    TACO_CHECK(ps.has(name), DataError, "checkpoint has unknown tensor: " + name);
    auto p = ps.get(name);
    uint32_t dtype = 0, ndim = 0;
    detail::rd(f, dtype);
    TACO_CHECK(dtype == sizeof(S), DataError, "checkpoint dtype mismatch: " + name);
    detail::rd(f, ndim);
    Shape shape(ndim);
    for (auto& d : shape) detail::rd(f, d);
    TACO_CHECK(shape == p->value.shape(), DataError,
               "checkpoint shape mismatch: " + name);
    f.read(reinterpret_cast<char*>(p->value.data()),
           static_cast<std::streamsize>(p->value.numel() * sizeof(S)));
    TACO_CHECK(f.gcount() ==
                   static_cast<std::streamsize>(p->value.numel() * sizeof(S)),
               DataError, "truncated checkpoint");
  }
  return echo;
}

inline std::string peek_checkpoint_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  TACO_CHECK(f.good(), DataError, "cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  TACO_CHECK(f.gcount() == 8 && std::memcmp(magic, kCkptMagic, 8) == 0, DataError,
             "not a checkpoint file: " + path);
  uint32_t version = 0;
  detail::rd(f, version);
  TACO_CHECK(version == kCkptVersion, DataError, "unsupported checkpoint version");
  return detail::rd_str(f);
}

}  // namespace taco
