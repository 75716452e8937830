#pragma once

// Binary checkpoint, little-endian throughout:
//
//   "PCAECKPT"  u32 version
//   u64 n, n bytes   run configuration (key = value text)
//   u64              iteration
//   u64 n, n bytes   rng engine state
//   f64              best validation metric (inf when none)
//   u64              record count
//   records:  u32 n, n bytes name; u32 rank; rank x u64 extents; f64 values
//
// Records are named param/<p>, buffer/<b>, amsgrad.m/<p>, amsgrad.v/<p> and
// amsgrad.vmax/<p>, written in registry order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pcae/config.hpp"
#include "pcae/model.hpp"
#include "pcae/optimizer.hpp"

namespace pcae {

inline constexpr char kCheckpointMagic[8] = {'P', 'C', 'A', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  RunConfig config;
  std::uint64_t iteration = 0;
  std::string rng_state;
  double best_metric = std::numeric_limits<double>::infinity();
  std::vector<TensorRecord> records;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

template <class T>
TensorRecord make_record(std::string name, const BasicTensor<T>& t) {
  return {std::move(name), t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.bytes(std::string(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  const std::string cfg = serialize_config(c.config);
  w.u64(cfg.size());
  w.bytes(cfg);
  w.u64(c.iteration);
  w.u64(c.rng_state.size());
  w.bytes(c.rng_state);
  w.f64(c.best_metric);
  w.u64(c.records.size());
  for (const auto& r : c.records) {
    if (shape_numel(r.shape) != r.values.size()) throw CheckpointError("record '" + r.name + "' has inconsistent size");
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name);
    w.u32(static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) w.u64(e);
    for (double v : r.values) w.f64(v);
  }
  return w.take();
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = parse_config(r.bytes(r.u64()));
  c.iteration = r.u64();
  c.rng_state = r.bytes(r.u64());
  c.best_metric = r.f64();
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.bytes(r.u32());
    const auto rank = r.u32();
    if (rank > 8) throw CheckpointError("record '" + t.name + "': implausible rank");
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.u64());
    const std::size_t n = shape_numel(t.shape);
    if (n > (bytes.size() / 8)) throw CheckpointError("record '" + t.name + "': extents exceed file size");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f64();
    c.records.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last record");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::string bytes = encode_checkpoint(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <class T>
Checkpoint capture_checkpoint(Autoencoder<T>& model, AmsGrad<T>& opt, const RunConfig& cfg, std::uint64_t iteration,
                              const Rng& rng, double best_metric) {
  Checkpoint c;
  c.config = cfg;
  c.iteration = iteration;
  c.rng_state = rng.state();
  c.best_metric = best_metric;
  auto reg = model.registry();
  for (auto* p : reg.params) c.records.push_back(detail::make_record("param/" + p->name, p->value));
  for (auto& [name, t] : reg.buffers) c.records.push_back(detail::make_record("buffer/" + name, *t));
  for (auto* p : reg.params) {
    auto it = opt.state().find(p->name);
    if (it == opt.state().end()) continue;
    c.records.push_back(detail::make_record("amsgrad.m/" + p->name, it->second.m));
    c.records.push_back(detail::make_record("amsgrad.v/" + p->name, it->second.v));
    c.records.push_back(detail::make_record("amsgrad.vmax/" + p->name, it->second.vmax));
  }
  return c;
}

/// Copies every parameter, buffer and optimizer slot into `model` / `opt`.
/// Every model tensor must be present with its exact shape, and no record
/// may be left unused.
template <class T>
void restore_checkpoint(const Checkpoint& c, Autoencoder<T>& model, AmsGrad<T>& opt) {
  std::map<std::string, const TensorRecord*> pending;
  for (const auto& r : c.records)
    if (!pending.emplace(r.name, &r).second) throw CheckpointError("duplicate record '" + r.name + "'");
  auto take = [&](const std::string& name, const Shape& shape, bool required) -> const TensorRecord* {
    auto it = pending.find(name);
    if (it == pending.end()) {
      if (required) throw CheckpointError("checkpoint is missing '" + name + "'");
      return nullptr;
    }
    const TensorRecord* r = it->second;
    if (r->shape != shape)
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint " + shape_str(r->shape) + ", model " +
                            shape_str(shape));
    pending.erase(it);
    return r;
  };
  auto load_into = [](const TensorRecord& r, BasicTensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(r.values[i]);
  };
  auto reg = model.registry();
  for (auto* p : reg.params) load_into(*take("param/" + p->name, p->value.shape(), true), p->value);
  for (auto& [name, t] : reg.buffers) load_into(*take("buffer/" + name, t->shape(), true), *t);
  opt.state().clear();
  for (auto* p : reg.params) {
    const auto* m = take("amsgrad.m/" + p->name, p->value.shape(), false);
    if (!m) continue;
    auto& s = opt.slot(*p);
    load_into(*m, s.m);
    load_into(*take("amsgrad.v/" + p->name, p->value.shape(), true), s.v);
    load_into(*take("amsgrad.vmax/" + p->name, p->value.shape(), true), s.vmax);
  }
  if (!pending.empty()) throw CheckpointError("checkpoint has unexpected record '" + pending.begin()->first + "'");
}

}  // namespace pcae
