#include "wmft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wmft/errors.hpp"

namespace wmft {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

constexpr char kMagic[8] = {'W', 'M', 'F', 'T', 'C', 'K', 'P', 'T'};

enum class Kind : std::uint8_t { kMatrix = 0, kInt = 1, kReal = 2, kString = 3 };

template <typename T>
void put_raw(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Checkpoint::Entry& Checkpoint::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("checkpoint entry missing: " + name);
  return it->second;
}

const Matrix& Checkpoint::matrix(const std::string& name) const {
  const auto* m = std::get_if<Matrix>(&at(name));
  if (m == nullptr) throw FormatError("checkpoint entry is not a matrix: " + name);
  return *m;
}

std::int64_t Checkpoint::integer(const std::string& name) const {
  const auto* v = std::get_if<std::int64_t>(&at(name));
  if (v == nullptr) throw FormatError("checkpoint entry is not an integer: " + name);
  return *v;
}

double Checkpoint::real(const std::string& name) const {
  const auto* v = std::get_if<double>(&at(name));
  if (v == nullptr) throw FormatError("checkpoint entry is not a real: " + name);
  return *v;
}

const std::string& Checkpoint::string(const std::string& name) const {
  const auto* v = std::get_if<std::string>(&at(name));
  if (v == nullptr) throw FormatError("checkpoint entry is not a string: " + name);
  return *v;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_raw<std::uint32_t>(out, kCheckpointVersion);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, entry] : entries_) {
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    if (const auto* m = std::get_if<Matrix>(&entry)) {
      put_raw(out, Kind::kMatrix);
      put_raw<std::uint64_t>(out, static_cast<std::uint64_t>(m->rows()));
      put_raw<std::uint64_t>(out, static_cast<std::uint64_t>(m->cols()));
      for (Eigen::Index r = 0; r < m->rows(); ++r) {
        for (Eigen::Index c = 0; c < m->cols(); ++c) put_raw<double>(out, (*m)(r, c));
      }
    } else if (const auto* i = std::get_if<std::int64_t>(&entry)) {
      put_raw(out, Kind::kInt);
      put_raw(out, *i);
    } else if (const auto* d = std::get_if<double>(&entry)) {
      put_raw(out, Kind::kReal);
      put_raw(out, *d);
    } else {
      const auto& s = std::get<std::string>(entry);
      put_raw(out, Kind::kString);
      put_raw<std::uint64_t>(out, s.size());
      out += s;
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Cursor cur(bytes);
  if (cur.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const auto version = cur.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = cur.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = cur.get<std::uint32_t>();
    std::string name = cur.get_bytes(name_len);
    const auto kind = cur.get<Kind>();
    switch (kind) {
      case Kind::kMatrix: {
        const auto rows = cur.get<std::uint64_t>();
        const auto cols = cur.get<std::uint64_t>();
        if (rows > (1u << 30) || cols > (1u << 30)) throw FormatError("matrix too large: " + name);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = cur.get<double>();
        }
        ckpt.entries_[name] = std::move(m);
        break;
      }
      case Kind::kInt:
        ckpt.entries_[name] = cur.get<std::int64_t>();
        break;
      case Kind::kReal:
        ckpt.entries_[name] = cur.get<double>();
        break;
      case Kind::kString: {
        const auto len = cur.get<std::uint64_t>();
        ckpt.entries_[name] = cur.get_bytes(static_cast<std::size_t>(len));
        break;
      }
      default:
        throw FormatError("unknown entry kind for " + name);
    }
  }
  if (!cur.done()) throw FormatError("trailing bytes after checkpoint entries");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing checkpoint: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

void put_mlp(Checkpoint& ckpt, const std::string& prefix, const MlpParams& params) {
  ckpt.put_int(prefix + ".layers", static_cast<std::int64_t>(params.layers.size()));
  ckpt.put_int(prefix + ".activation", params.activation == Activation::kElu ? 0 : 1);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    ckpt.put_matrix(p + ".w", params.layers[i].weights);
    ckpt.put_matrix(p + ".b", params.layers[i].biases);
  }
}

MlpParams get_mlp(const Checkpoint& ckpt, const std::string& prefix) {
  MlpParams params;
  const auto n = ckpt.integer(prefix + ".layers");
  params.activation = ckpt.integer(prefix + ".activation") == 0 ? Activation::kElu
                                                                : Activation::kIdentity;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    const Matrix& b = ckpt.matrix(p + ".b");
    if (b.cols() != 1) throw FormatError("bias entry is not a column: " + p);
    params.layers.push_back({ckpt.matrix(p + ".w"), b.col(0)});
  }
  try {
    check_params(params);
  } catch (const ShapeError& e) {
    throw FormatError(prefix + ": " + e.what());
  }
  return params;
}

void put_grads(Checkpoint& ckpt, const std::string& prefix, const GradBuffer& grads) {
  ckpt.put_int(prefix + ".layers", static_cast<std::int64_t>(grads.layers.size()));
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    ckpt.put_matrix(p + ".w", grads.layers[i].weights);
    ckpt.put_matrix(p + ".b", grads.layers[i].biases);
  }
}

GradBuffer get_grads(const Checkpoint& ckpt, const std::string& prefix) {
  GradBuffer g;
  const auto n = ckpt.integer(prefix + ".layers");
  for (std::int64_t i = 0; i < n; ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    g.layers.push_back({ckpt.matrix(p + ".w"), ckpt.matrix(p + ".b").col(0)});
  }
  return g;
}

}  // namespace wmft
