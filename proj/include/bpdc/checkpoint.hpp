#pragma once

// Binary checkpoint layout, version 1. All integers are little-endian u64,
// all reals little-endian IEEE-754 binary64.
//
//   offset 0   8 bytes  magic "BPDCCKPT"
//              u64      format_version
//              u64      iteration
//              u64      master seed
//              u64      ADAM step counter t
//   then ten length-prefixed f64 arrays (u64 count, count * f64), in order:
//     1 hyper     [alpha, gamma, sigma2, c, K, M, D, L_max, prune_threshold, nonneg]
//     2 net meta  [activation (0 tanh, 1 relu, 2 sigmoid), n_dims, dims...]
//     3 net params (MultiplexerNet::pack order)
//     4 phi (D x M, column-major)
//     5 bank a    6 bank b    7 mask (0/1)
//     8 adam hyper [beta1, beta2, eps, stepsize]
//     9 adam m   10 adam v

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "bpdc/dataset.hpp"
#include "bpdc/errors.hpp"
#include "bpdc/trainer.hpp"

namespace bpdc {

inline constexpr char kCheckpointMagic[9] = "BPDCCKPT";
inline constexpr std::uint64_t kCheckpointVersion = 1;

using Checkpoint = TrainerState;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_array(std::string& out, const double* data, std::size_t n) {
  put_u64(out, n);
  for (std::size_t i = 0; i < n; ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}

inline void put_f64_array(std::string& out, const std::vector<double>& v) {
  put_f64_array(out, v.data(), v.size());
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  std::vector<double> f64_array() {
    const std::size_t at = pos_;
    const std::uint64_t n = u64();
    if (n > (buf_.size() - pos_) / 8) {
      throw FormatError(what_ + ": array length " + std::to_string(n) + " at byte offset " +
                        std::to_string(at) + " exceeds remaining file size");
    }
    std::vector<double> out(n);
    for (auto& v : out) v = std::bit_cast<double>(u64());
    return out;
  }

  void bytes(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t position() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError(what_ + ": truncated at byte offset " + std::to_string(pos_));
    }
  }
  const std::vector<unsigned char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline int activation_code(Activation a) {
  switch (a) {
    case Activation::kTanh: return 0;
    case Activation::kRelu: return 1;
    case Activation::kSigmoid: return 2;
  }
  return 0;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const HyperParams& h = ck.model.hyper;
  std::string out(kCheckpointMagic, 8);
  detail::put_u64(out, kCheckpointVersion);
  detail::put_u64(out, ck.iter);
  detail::put_u64(out, ck.seed);
  detail::put_u64(out, ck.adam.t);
  detail::put_f64_array(out, {h.alpha, h.gamma, h.sigma2, h.c, double(h.K), double(h.M),
                              double(h.D), double(h.L_max), h.prune_threshold,
                              h.nonneg_dict ? 1.0 : 0.0});
  std::vector<double> meta{double(detail::activation_code(ck.model.net.activation())),
                           double(ck.model.net.dims().size())};
  for (int d : ck.model.net.dims()) meta.push_back(d);
  detail::put_f64_array(out, meta);
  std::vector<double> params(ck.model.net.parameter_count());
  ck.model.net.pack(params);
  detail::put_f64_array(out, params);
  detail::put_f64_array(out, ck.model.phi.data(), static_cast<std::size_t>(ck.model.phi.size()));
  detail::put_f64_array(out, ck.bank.a.data(), static_cast<std::size_t>(ck.bank.a.size()));
  detail::put_f64_array(out, ck.bank.b.data(), static_cast<std::size_t>(ck.bank.b.size()));
  std::vector<double> mask(ck.mask.active.begin(), ck.mask.active.end());
  detail::put_f64_array(out, mask);
  detail::put_f64_array(out, {ck.adam.beta1, ck.adam.beta2, ck.adam.eps, ck.adam.stepsize});
  detail::put_f64_array(out, ck.adam.m.data(), static_cast<std::size_t>(ck.adam.m.size()));
  detail::put_f64_array(out, ck.adam.v.data(), static_cast<std::size_t>(ck.adam.v.size()));
  return out;
}

inline Checkpoint parse_checkpoint(const std::vector<unsigned char>& buf, const std::string& what) {
  detail::ByteReader r(buf, what);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError(what + ": not a checkpoint (bad magic at byte offset 0)");
  }
  const std::uint64_t version = r.u64();
  if (version != kCheckpointVersion) {
    throw VersionError(what + ": checkpoint format version " + std::to_string(version) +
                       " is incompatible with supported version " +
                       std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  ck.iter = r.u64();
  ck.seed = r.u64();
  ck.adam.t = r.u64();

  auto fail = [&](const std::string& msg) {
    throw FormatError(what + ": " + msg + " (near byte offset " + std::to_string(r.position()) +
                      ")");
  };
  auto as_int = [&](double v) {
    if (v != std::floor(v) || v < 0 || v > 1e9) fail("invalid integer field");
    return static_cast<int>(v);
  };

  const auto hyper = r.f64_array();
  if (hyper.size() != 10) fail("hyperparameter block has wrong length");
  HyperParams& h = ck.model.hyper;
  h.alpha = hyper[0];
  h.gamma = hyper[1];
  h.sigma2 = hyper[2];
  h.c = hyper[3];
  h.K = as_int(hyper[4]);
  h.M = as_int(hyper[5]);
  h.D = as_int(hyper[6]);
  h.L_max = as_int(hyper[7]);
  h.prune_threshold = hyper[8];
  h.nonneg_dict = hyper[9] != 0.0;
  try {
    h.validate();
  } catch (const std::exception& e) {
    fail(std::string("invalid hyperparameters: ") + e.what());
  }

  const auto meta = r.f64_array();
  if (meta.size() < 2) fail("network meta block too short");
  const int act = as_int(meta[0]);
  const int ndims = as_int(meta[1]);
  if (act > 2 || static_cast<std::size_t>(ndims) + 2 != meta.size() || ndims < 2) {
    fail("network meta block malformed");
  }
  std::vector<int> dims;
  for (int i = 0; i < ndims; ++i) dims.push_back(as_int(meta[2 + static_cast<std::size_t>(i)]));
  if (dims.front() != h.K || dims.back() != h.M) fail("network dims disagree with K/M");
  const Activation acts[] = {Activation::kTanh, Activation::kRelu, Activation::kSigmoid};
  ck.model.net = MultiplexerNet(dims, acts[act]);

  const auto params = r.f64_array();
  if (params.size() != ck.model.net.parameter_count()) fail("network parameter count mismatch");
  ck.model.net.unpack(params);

  const auto phi = r.f64_array();
  if (phi.size() != static_cast<std::size_t>(h.D) * h.M) fail("dictionary size mismatch");
  ck.model.phi = Eigen::Map<const Matrix>(phi.data(), h.D, h.M);

  const auto a = r.f64_array();
  const auto b = r.f64_array();
  const auto mask = r.f64_array();
  const auto K = static_cast<std::size_t>(h.K);
  if (a.size() != K || b.size() != K || mask.size() != K) fail("posterior bank size mismatch");
  ck.bank.a = Eigen::Map<const Vector>(a.data(), h.K);
  ck.bank.b = Eigen::Map<const Vector>(b.data(), h.K);
  ck.mask.active.resize(K);
  for (std::size_t k = 0; k < K; ++k) ck.mask.active[k] = mask[k] != 0.0 ? 1 : 0;

  const auto adam_hyper = r.f64_array();
  if (adam_hyper.size() != 4) fail("ADAM block has wrong length");
  ck.adam.beta1 = adam_hyper[0];
  ck.adam.beta2 = adam_hyper[1];
  ck.adam.eps = adam_hyper[2];
  ck.adam.stepsize = adam_hyper[3];
  const auto m = r.f64_array();
  const auto v = r.f64_array();
  if (m.size() != ck.model.theta_size() || v.size() != m.size()) fail("ADAM moment size mismatch");
  ck.adam.m = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  ck.adam.v = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (!r.at_end()) fail("trailing bytes after last field");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace bpdc
