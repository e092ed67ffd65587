#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bpdc/dataset.hpp"
#include "bpdc/rng.hpp"

namespace bpdc {
namespace {

namespace fs = std::filesystem;

class DatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bpdc_dataset_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_bytes(const std::string& name, const std::vector<unsigned char>& bytes) {
    const fs::path p = dir_ / name;
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return p;
  }

  fs::path write_text(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

std::vector<unsigned char> idx_header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::vector<unsigned char> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
  };
  put(magic);
  for (auto d : dims) put(d);
  return out;
}

TEST_F(DatasetTest, HandCraftedImage) {
  auto bytes = idx_header(0x803, {1, 2, 2});
  for (unsigned char v : {0, 255, 0, 255}) bytes.push_back(v);
  const Dataset ds = load_idx(write_bytes("img", bytes));
  ASSERT_EQ(ds.D(), 4);
  ASSERT_EQ(ds.N(), 1);
  EXPECT_EQ(ds.image_rows, 2);
  EXPECT_EQ(ds.image_cols, 2);
  const double expect[] = {0.0, 1.0, 0.0, 1.0};
  for (int d = 0; d < 4; ++d) EXPECT_EQ(ds.X(d, 0), expect[d]);
}

TEST_F(DatasetTest, WrongMagic) {
  auto bytes = idx_header(0x804, {1, 1, 1});
  bytes.push_back(3);
  try {
    load_idx(write_bytes("img", bytes));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST_F(DatasetTest, TruncatedAndMismatched) {
  auto bytes = idx_header(0x803, {2, 2, 2});
  for (int i = 0; i < 5; ++i) bytes.push_back(1);
  EXPECT_THROW(load_idx(write_bytes("short", bytes)), FormatError);
  EXPECT_THROW(load_idx(write_bytes("header", {0, 0, 8})), FormatError);

  auto good = idx_header(0x803, {2, 1, 1});
  good.push_back(1);
  good.push_back(2);
  auto labels = idx_header(0x801, {3});
  for (int i = 0; i < 3; ++i) labels.push_back(7);
  EXPECT_THROW(load_idx(write_bytes("img", good), write_bytes("lab", labels)), FormatError);
}

TEST_F(DatasetTest, LabelsAndScalingModes) {
  auto bytes = idx_header(0x803, {2, 1, 2});
  for (unsigned char v : {0, 51, 255, 153}) bytes.push_back(v);
  auto labels = idx_header(0x801, {2});
  labels.push_back(3);
  labels.push_back(9);
  const fs::path img = write_bytes("img", bytes);
  const fs::path lab = write_bytes("lab", labels);

  const Dataset raw = load_idx(img, lab, Scaling::kRaw);
  EXPECT_EQ(raw.X(1, 0), 51.0);
  EXPECT_EQ(*raw.labels, (std::vector<int>{3, 9}));

  const Dataset centred = load_idx(img, lab, Scaling::kZeroMean);
  EXPECT_NEAR(centred.X.row(0).sum(), 0.0, 1e-15);
  EXPECT_NEAR(centred.X.row(1).sum(), 0.0, 1e-15);
  EXPECT_NEAR(centred.X(0, 1) - centred.X(0, 0), 1.0, 1e-15);
}

TEST_F(DatasetTest, IdxRoundTripRawScaling) {
  Rng rng(1);
  Matrix X(12, 7);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = static_cast<double>(rng.uniform_index(256));
  std::vector<int> labels{0, 1, 2, 3, 4, 5, 6};
  write_idx_images(dir_ / "x.idx", X, 3, 4);
  write_idx_labels(dir_ / "y.idx", labels);
  const Dataset ds = load_idx(dir_ / "x.idx", dir_ / "y.idx", Scaling::kRaw);
  EXPECT_EQ(ds.X, X);
  EXPECT_EQ(*ds.labels, labels);
  const Dataset auto_detected = load_dataset(dir_ / "x.idx", dir_ / "y.idx", Scaling::kRaw);
  EXPECT_EQ(auto_detected.X, X);
}

TEST_F(DatasetTest, CsvRoundTrip) {
  Rng rng(2);
  Matrix X(3, 5);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal() * 1e3;
  write_file_atomic(dir_ / "x.csv", matrix_to_csv(X));
  EXPECT_FALSE(fs::exists(dir_ / "x.csv.tmp"));
  const Dataset ds = load_dataset(dir_ / "x.csv", write_text("l.txt", "1\n2\n3\n4\n5\n"), Scaling::kRaw);
  EXPECT_EQ(ds.X, X);
  EXPECT_EQ(ds.labels->size(), 5u);
  EXPECT_THROW(load_dataset(dir_ / "x.csv", write_text("bad.txt", "1\n2\n"), Scaling::kRaw),
               FormatError);
}

TEST_F(DatasetTest, CsvErrors) {
  EXPECT_THROW(load_matrix_csv(write_text("ragged.csv", "1,2\n3\n")), FormatError);
  EXPECT_THROW(load_matrix_csv(write_text("word.csv", "1,x\n")), FormatError);
  EXPECT_THROW(load_matrix_csv(dir_ / "missing.csv"), FormatError);
}

TEST(Scaling, FromString) {
  EXPECT_EQ(scaling_from_string("raw"), Scaling::kRaw);
  EXPECT_EQ(scaling_from_string("zero_mean"), Scaling::kZeroMean);
  EXPECT_THROW(scaling_from_string("minmax"), ConfigError);
}

}  // namespace
}  // namespace bpdc
