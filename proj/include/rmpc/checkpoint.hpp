#pragma once

// Policy checkpoints.
//
//   "RMPC1"                      5 bytes
//   u8  cell kind                0 plain, 1 gated
//   u32 layers, hidden, state_dim, ref_dim, output_dim
//   f64 output_scale[output_dim]
//   u32 input_scale count (0 = identity), f64 input_scale[count]
//   u64 parameter count, f64 theta[count]
//
// Integers and doubles are little-endian. A sidecar "<file>.meta" holds
// key=value lines (config hash, iteration, seed, descriptor).

#include "rmpc/policy.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace rmpc {

inline constexpr char kCheckpointMagic[5] = {'R', 'M', 'P', 'C', '1'};

namespace detail {

template <class T>
void put_le(std::string& buf, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(v);
  else
    bits = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& data, std::string name) : d_(data), name_(std::move(name)) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > d_.size()) throw ConfigError("checkpoint " + name_ + ": truncated");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(bits);
    else
      return static_cast<T>(bits);
  }
  bool done() const { return pos_ == d_.size(); }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& d_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

// Descriptor text used in metadata and mismatch messages.
inline std::string architecture_descriptor(const PolicyShape& s) {
  std::string d = s.describe() + " output_scale=" + hex_join(s.output_scale);
  if (s.input_scale.size() > 0) d += " input_scale=" + hex_join(s.input_scale);
  return d;
}

inline std::string encode_checkpoint(const RecurrentPolicy& policy) {
  const PolicyShape& s = policy.shape();
  std::string buf(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(s.cell));
  for (int v : {s.layers, s.hidden, s.state_dim, s.ref_dim, s.output_dim})
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(v));
  for (Eigen::Index i = 0; i < s.output_scale.size(); ++i) detail::put_le(buf, s.output_scale[i]);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(s.input_scale.size()));
  for (Eigen::Index i = 0; i < s.input_scale.size(); ++i) detail::put_le(buf, s.input_scale[i]);
  detail::put_le<std::uint64_t>(buf, policy.param_count());
  for (Eigen::Index i = 0; i < policy.params().size(); ++i) detail::put_le(buf, policy.params()[i]);
  return buf;
}

inline RecurrentPolicy decode_checkpoint(const std::string& data, const std::string& name = "<memory>") {
  if (data.size() < 5 || std::memcmp(data.data(), kCheckpointMagic, 5) != 0)
    throw ConfigError("checkpoint " + name + ": bad magic (expected RMPC1)");
  detail::Reader rd(data, name);
  rd.skip(5);
  PolicyShape s;
  const auto cell = rd.get<std::uint8_t>();
  if (cell > 1) throw ConfigError("checkpoint " + name + ": unknown cell kind " + std::to_string(cell));
  s.cell = static_cast<CellKind>(cell);
  const auto dim = [&] {
    const auto v = rd.get<std::uint32_t>();
    if (v == 0 || v > (1u << 20)) throw ConfigError("checkpoint " + name + ": implausible dimension");
    return static_cast<int>(v);
  };
  s.layers = dim();
  s.hidden = dim();
  s.state_dim = dim();
  s.ref_dim = dim();
  s.output_dim = dim();
  s.output_scale.resize(s.output_dim);
  for (int i = 0; i < s.output_dim; ++i) s.output_scale[i] = rd.get<double>();
  const auto n_in = rd.get<std::uint32_t>();
  if (n_in != 0 && static_cast<int>(n_in) != s.input_dim())
    throw ConfigError("checkpoint " + name + ": input_scale length mismatch");
  s.input_scale.resize(n_in);
  for (std::uint32_t i = 0; i < n_in; ++i) s.input_scale[i] = rd.get<double>();
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("checkpoint " + name + ": " + e.what());
  }
  RecurrentPolicy policy(s);
  const auto count = rd.get<std::uint64_t>();
  if (count != policy.param_count())
    throw ConfigError("checkpoint " + name + ": parameter count " + std::to_string(count) +
                      " does not match architecture (" + std::to_string(policy.param_count()) + ")");
  Vec theta(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rd.get<double>();
  if (!rd.done()) throw ConfigError("checkpoint " + name + ": trailing bytes");
  if (!theta.allFinite()) throw ConfigError("checkpoint " + name + ": non-finite parameters");
  policy.set_params(theta);
  return policy;
}

using CheckpointMeta = std::map<std::string, std::string>;

inline void save_checkpoint(const std::filesystem::path& path, const RecurrentPolicy& policy,
                            CheckpointMeta meta = {}) {
  detail::write_file(path, encode_checkpoint(policy));
  meta["architecture"] = architecture_descriptor(policy.shape());
  meta["param_count"] = std::to_string(policy.param_count());
  std::string text;
  for (const auto& [k, v] : meta) text += k + "=" + v + "\n";
  detail::write_file(path.string() + ".meta", text);
}

inline RecurrentPolicy load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

inline CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path) {
  CheckpointMeta meta;
  const std::string text = detail::read_file(path.string() + ".meta");
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  return meta;
}

// Refuses a checkpoint whose architecture differs from the expected one.
inline void require_architecture(const RecurrentPolicy& loaded, const PolicyShape& expected) {
  if (!(loaded.shape() == expected))
    throw ConfigError("architecture mismatch: checkpoint has [" + architecture_descriptor(loaded.shape()) +
                      "], config expects [" + architecture_descriptor(expected) + "]");
}

}  // namespace rmpc
