#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bpdc/errors.hpp"
#include "bpdc/math.hpp"

namespace bpdc {

enum class Scaling { kUnitInterval, kZeroMean, kRaw };

inline Scaling scaling_from_string(const std::string& s) {
  if (s == "unit_interval") return Scaling::kUnitInterval;
  if (s == "zero_mean") return Scaling::kZeroMean;
  if (s == "raw") return Scaling::kRaw;
  throw ConfigError("unknown scaling '" + s + "' (unit_interval|zero_mean|raw)");
}

/// Observations as columns of X, with optional class labels and image shape.
struct Dataset {
  Matrix X;  // D x N
  std::optional<std::vector<int>> labels;
  int image_rows = 0;  // 0 when the data are not images
  int image_cols = 0;
  Scaling scaling = Scaling::kRaw;

  int D() const { return static_cast<int>(X.rows()); }
  int N() const { return static_cast<int>(X.cols()); }
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::string& what) {
  if (offset + 4 > buf.size()) {
    throw FormatError(what + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads IDX (MNIST container) images and optional labels. Each image becomes
/// one column of X in stored (row-major pixel) order.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                        Scaling scaling = Scaling::kUnitInterval) {
  const auto img = read_file_bytes(images_path);
  const std::string what = images_path.string();
  const std::uint32_t magic = detail::read_be32(img, 0, what);
  if (magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << what << ": bad magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x803)";
    throw FormatError(msg.str());
  }
  const std::uint32_t n = detail::read_be32(img, 4, what);
  const std::uint32_t rows = detail::read_be32(img, 8, what);
  const std::uint32_t cols = detail::read_be32(img, 12, what);
  const std::size_t D = static_cast<std::size_t>(rows) * cols;
  const std::size_t need = 16 + D * n;
  if (img.size() < need) {
    throw FormatError(what + ": truncated pixel data at byte offset " +
                      std::to_string(img.size()) + " (expected " + std::to_string(need) +
                      " bytes)");
  }
  Dataset ds;
  ds.image_rows = static_cast<int>(rows);
  ds.image_cols = static_cast<int>(cols);
  ds.scaling = scaling;
  ds.X.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < D; ++d) {
      ds.X(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = img[16 + i * D + d];
    }
  }
  if (scaling != Scaling::kRaw) ds.X /= 255.0;
  if (scaling == Scaling::kZeroMean && n > 0) {
    const Vector mean = ds.X.rowwise().mean();
    ds.X.colwise() -= mean;
  }

  if (labels_path) {
    const auto lab = read_file_bytes(*labels_path);
    const std::string lwhat = labels_path->string();
    const std::uint32_t lmagic = detail::read_be32(lab, 0, lwhat);
    if (lmagic != kIdxLabelsMagic) {
      std::ostringstream msg;
      msg << lwhat << ": bad magic 0x" << std::hex << lmagic
          << " at byte offset 0 (expected 0x801)";
      throw FormatError(msg.str());
    }
    const std::uint32_t ln = detail::read_be32(lab, 4, lwhat);
    if (ln != n) {
      throw FormatError(lwhat + ": label count " + std::to_string(ln) + " at byte offset 4 " +
                        "does not match image count " + std::to_string(n));
    }
    if (lab.size() < 8 + static_cast<std::size_t>(ln)) {
      throw FormatError(lwhat + ": truncated label data at byte offset " +
                        std::to_string(lab.size()));
    }
    std::vector<int> labels(ln);
    for (std::size_t i = 0; i < ln; ++i) labels[i] = lab[8 + i];
    ds.labels = std::move(labels);
  }
  return ds;
}

/// Writes 8-bit images (values rounded and clamped to [0, 255]) in IDX form.
inline void write_idx_images(const std::filesystem::path& path, const Matrix& X, int rows,
                             int cols) {
  if (static_cast<Eigen::Index>(rows) * cols != X.rows()) {
    throw ShapeError("write_idx_images: rows*cols != D");
  }
  std::string out;
  detail::put_be32(out, kIdxImagesMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(X.cols()));
  detail::put_be32(out, static_cast<std::uint32_t>(rows));
  detail::put_be32(out, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (Eigen::Index d = 0; d < X.rows(); ++d) {
      const double v = std::clamp(std::round(X(d, i)), 0.0, 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  write_file_atomic(path, out);
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::string out;
  detail::put_be32(out, kIdxLabelsMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.push_back(static_cast<char>(static_cast<unsigned char>(l)));
  write_file_atomic(path, out);
}

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with one datum per row (no header) -> D x N matrix.
inline Matrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                          ": not a number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        " has a different column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no data rows");
  Matrix X(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t d = 0; d < rows[i].size(); ++d) {
      X(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = rows[i][d];
    }
  }
  return X;
}

inline std::string matrix_to_csv(const Matrix& X) {
  std::string out;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (Eigen::Index d = 0; d < X.rows(); ++d) {
      if (d) out += ',';
      out += format_double(X(d, i));
    }
    out += '\n';
  }
  return out;
}

inline std::vector<int> load_labels_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<int> out;
  int v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) throw FormatError(path.string() + ": labels must be integers");
  return out;
}

/// Loads either an IDX image file (detected by magic) or a CSV matrix.
/// Labels may be IDX or one integer per line.
inline Dataset load_dataset(const std::filesystem::path& data_path,
                            const std::optional<std::filesystem::path>& labels_path,
                            Scaling scaling) {
  const auto head = [&] {
    std::ifstream in(data_path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + data_path.string() + "'");
    std::vector<unsigned char> b(4, 0);
    in.read(reinterpret_cast<char*>(b.data()), 4);
    return b;
  }();
  const bool is_idx = head[0] == 0 && head[1] == 0 && head[2] == 0x08 && head[3] == 0x03;
  if (is_idx) {
    std::optional<std::filesystem::path> idx_labels;
    std::optional<std::vector<int>> text_labels;
    if (labels_path) {
      const auto lb = read_file_bytes(*labels_path);
      if (lb.size() >= 4 && lb[0] == 0 && lb[1] == 0 && lb[2] == 0x08 && lb[3] == 0x01) {
        idx_labels = labels_path;
      } else {
        text_labels = load_labels_text(*labels_path);
      }
    }
    Dataset ds = load_idx(data_path, idx_labels, scaling);
    if (text_labels) {
      if (static_cast<int>(text_labels->size()) != ds.N()) {
        throw FormatError("label count does not match image count");
      }
      ds.labels = std::move(text_labels);
    }
    return ds;
  }
  Dataset ds;
  ds.X = load_matrix_csv(data_path);
  ds.scaling = Scaling::kRaw;
  if (scaling == Scaling::kZeroMean) {
    const Vector mean = ds.X.rowwise().mean();
    ds.X.colwise() -= mean;
    ds.scaling = scaling;
  }
  if (labels_path) {
    auto labels = load_labels_text(*labels_path);
    if (static_cast<int>(labels.size()) != ds.N()) {
      throw FormatError("label count does not match data count");
    }
    ds.labels = std::move(labels);
  }
  return ds;
}

}  // namespace bpdc
