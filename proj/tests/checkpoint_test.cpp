#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "bpdc/checkpoint.hpp"

namespace bpdc {
namespace {

namespace fs = std::filesystem;

Checkpoint random_state(Rng& rng) {
  HyperParams h;
  h.K = 2 + static_cast<int>(rng.uniform_index(8));
  h.M = 2 + static_cast<int>(rng.uniform_index(6));
  h.D = 1 + static_cast<int>(rng.uniform_index(9));
  h.L_max = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h.K)));
  h.alpha = 0.1 + rng.uniform();
  h.gamma = 0.5 * rng.uniform() + 0.01;
  h.sigma2 = rng.uniform() + 1e-3;
  h.nonneg_dict = rng.bernoulli(0.5);
  const Activation acts[] = {Activation::kTanh, Activation::kRelu, Activation::kSigmoid};
  std::vector<int> hidden;
  for (std::uint64_t i = 0, n = rng.uniform_index(3); i < n; ++i) {
    hidden.push_back(1 + static_cast<int>(rng.uniform_index(7)));
  }
  TrainConfig cfg;
  cfg.seed = rng.next_u64();
  Checkpoint ck =
      initial_state(make_model(h, hidden, acts[rng.uniform_index(3)], rng), cfg);
  for (int k = 0; k < h.K; ++k) {
    ck.bank.a[k] = rng.uniform() * 10.0;
    ck.bank.b[k] = rng.uniform() * 10.0;
    ck.mask.active[static_cast<std::size_t>(k)] = rng.bernoulli(0.7);
  }
  for (Eigen::Index i = 0; i < ck.adam.m.size(); ++i) {
    ck.adam.m[i] = rng.normal();
    ck.adam.v[i] = rng.uniform();
  }
  ck.adam.t = rng.uniform_index(1000);
  ck.iter = rng.uniform_index(100000);
  return ck;
}

std::vector<unsigned char> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Checkpoint ck = random_state(rng);
    const std::string bytes = serialize_checkpoint(ck);
    const Checkpoint back = parse_checkpoint(as_bytes(bytes), "memory");
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.model.pack_theta(), ck.model.pack_theta());
    EXPECT_EQ(back.model.net.dims(), ck.model.net.dims());
    EXPECT_EQ(back.model.net.activation(), ck.model.net.activation());
    EXPECT_EQ(back.bank.a, ck.bank.a);
    EXPECT_EQ(back.bank.b, ck.bank.b);
    EXPECT_EQ(back.mask, ck.mask);
    EXPECT_EQ(back.adam.m, ck.adam.m);
    EXPECT_EQ(back.adam.v, ck.adam.v);
    EXPECT_EQ(back.adam.t, ck.adam.t);
    EXPECT_EQ(back.iter, ck.iter);
    EXPECT_EQ(back.seed, ck.seed);
    EXPECT_EQ(back.model.hyper.nonneg_dict, ck.model.hyper.nonneg_dict);
    EXPECT_EQ(back.model.hyper.sigma2, ck.model.hyper.sigma2);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  Rng rng(2);
  const Checkpoint ck = random_state(rng);
  const fs::path path = fs::temp_directory_path() / "bpdc_ckpt_test.bin";
  save_checkpoint(path, ck);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(ck));
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST(Checkpoint, EveryTruncationIsFormatError) {
  Rng rng(3);
  const std::string bytes = serialize_checkpoint(random_state(rng));
  for (std::size_t n = 0; n < bytes.size(); n += 7) {
    EXPECT_THROW(parse_checkpoint(as_bytes(bytes.substr(0, n)), "trunc"), FormatError) << n;
  }
  EXPECT_THROW(parse_checkpoint(as_bytes(bytes + "x"), "trailing"), FormatError);
}

TEST(Checkpoint, VersionMismatch) {
  Rng rng(4);
  std::string bytes = serialize_checkpoint(random_state(rng));
  bytes[8] = 2;
  EXPECT_THROW(parse_checkpoint(as_bytes(bytes), "v2"), VersionError);
  bytes[8] = 1;
  bytes[0] = 'X';
  EXPECT_THROW(parse_checkpoint(as_bytes(bytes), "magic"), FormatError);
}

TEST(Checkpoint, LengthCorruption) {
  Rng rng(5);
  std::string bytes = serialize_checkpoint(random_state(rng));
  // First array length lives right after the 40-byte header.
  bytes[40] = 11;
  EXPECT_THROW(parse_checkpoint(as_bytes(bytes), "len"), FormatError);
}

}  // namespace
}  // namespace bpdc
