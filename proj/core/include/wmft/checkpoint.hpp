#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include "wmft/netcore.hpp"

namespace wmft {

// Versioned binary container of named entries. Layout (little-endian):
//
//   magic    8 bytes  "WMFTCKPT"
//   version  u32      kCheckpointVersion
//   count    u32      number of entries
//   entries  count x { u32 name_len, name bytes, u8 kind, payload }
//
//   kind 0 (matrix): u64 rows, u64 cols, rows*cols f64 in row-major order
//   kind 1 (int):    i64
//   kind 2 (real):   f64
//   kind 3 (string): u64 length, bytes
//
// Entries are written in lexicographic name order, so equal contents give
// byte-identical files.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  using Entry = std::variant<Matrix, std::int64_t, double, std::string>;

  void put_matrix(const std::string& name, const Matrix& m) { entries_[name] = m; }
  void put_int(const std::string& name, std::int64_t v) { entries_[name] = v; }
  void put_real(const std::string& name, double v) { entries_[name] = v; }
  void put_string(const std::string& name, std::string v) { entries_[name] = std::move(v); }

  bool has(const std::string& name) const { return entries_.contains(name); }
  const Matrix& matrix(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  double real(const std::string& name) const;
  const std::string& string(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  const Entry& at(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

void put_mlp(Checkpoint& ckpt, const std::string& prefix, const MlpParams& params);
MlpParams get_mlp(const Checkpoint& ckpt, const std::string& prefix);

void put_grads(Checkpoint& ckpt, const std::string& prefix, const GradBuffer& grads);
GradBuffer get_grads(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace wmft
