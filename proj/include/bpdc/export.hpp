#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bpdc/dataset.hpp"
#include "bpdc/inference.hpp"
#include "bpdc/model.hpp"
#include "bpdc/trainer.hpp"

namespace bpdc {

inline constexpr const char* kMetricsHeader = "iter,eta,mse,mean_card,active_factors,objective";

inline std::string metrics_row_csv(const MetricsRow& r) {
  return std::to_string(r.iter) + ',' + format_double(r.eta) + ',' + format_double(r.mse) + ',' +
         format_double(r.mean_card) + ',' + std::to_string(r.active_factors) + ',' +
         format_double(r.objective) + '\n';
}

inline std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = std::string(kMetricsHeader) + '\n';
  for (const auto& r : rows) out += metrics_row_csv(r);
  return out;
}

inline std::string pi_trace_csv(std::span<const PiSnapshot> trace) {
  std::string out = "iter";
  const Eigen::Index K = trace.empty() ? 0 : trace.front().expected_pi.size();
  for (Eigen::Index k = 0; k < K; ++k) out += ",pi_" + std::to_string(k);
  out += '\n';
  for (const auto& s : trace) {
    out += std::to_string(s.iter);
    for (Eigen::Index k = 0; k < s.expected_pi.size(); ++k) out += ',' + format_double(s.expected_pi[k]);
    out += '\n';
  }
  return out;
}

/// Binary PGM (P5); each cell of the grid is min-max normalised on its own.
inline std::string pgm_grid(const std::vector<Vector>& cells, int grid_rows, int grid_cols,
                            int img_rows, int img_cols) {
  const int H = grid_rows * img_rows;
  const int W = grid_cols * img_cols;
  std::string pixels(static_cast<std::size_t>(H) * W, '\0');
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const int gr = static_cast<int>(c) / grid_cols;
    const int gc = static_cast<int>(c) % grid_cols;
    if (gr >= grid_rows) break;
    const Vector& v = cells[c];
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    for (int r = 0; r < img_rows; ++r) {
      for (int q = 0; q < img_cols; ++q) {
        const double val = (v[r * img_cols + q] - lo) / span;
        const auto byte = static_cast<unsigned char>(std::lround(std::clamp(val, 0.0, 1.0) * 255.0));
        pixels[static_cast<std::size_t>(gr * img_rows + r) * W + gc * img_cols + q] =
            static_cast<char>(byte);
      }
    }
  }
  return "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n" + pixels;
}

/// Distinct labels (ascending) and their pairwise expected factor overlap
/// sum_k u[d1][k] * u[d2][k], u[d][k] being the fraction of label-d codes
/// with bit k set, scaled so the largest entry is 1.
struct FactorSharing {
  std::vector<int> labels;
  Matrix sharing;
};

inline FactorSharing factor_sharing(std::span<const SparseCode> codes, std::span<const int> labels,
                                    int K) {
  if (codes.size() != labels.size()) throw ShapeError("factor_sharing: codes/labels length differ");
  std::map<int, std::pair<Vector, int>> per_label;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto [it, inserted] = per_label.try_emplace(labels[i], Vector::Zero(K), 0);
    for (int k = 0; k < K; ++k) it->second.first[k] += codes[i].z[static_cast<std::size_t>(k)];
    it->second.second += 1;
  }
  FactorSharing out;
  Matrix U(static_cast<Eigen::Index>(per_label.size()), K);
  Eigen::Index row = 0;
  for (const auto& [label, acc] : per_label) {
    out.labels.push_back(label);
    U.row(row++) = (acc.first / acc.second).transpose();
  }
  out.sharing = U * U.transpose();
  const double top = out.sharing.size() ? out.sharing.maxCoeff() : 0.0;
  if (top > 0.0) out.sharing /= top;
  return out;
}

/// Output response of the network to all 2^n_bits combinations of the
/// n_bits factors with highest E[pi] (other bits off).
struct TopBitsRow {
  BinaryCode pattern;                  // n_bits entries
  std::vector<int> top_outputs;        // indices of the largest simplex entries
  std::vector<double> top_values;
};

struct TopBitsTable {
  std::vector<int> factors;  // chosen factor indices, highest E[pi] first
  std::vector<TopBitsRow> rows;
};

inline TopBitsTable top_bits_table(const ModelState& model, const BetaPosteriorBank& bank,
                                   int n_bits = 5, int n_out = 4) {
  const int K = model.hyper.K;
  n_bits = std::min(n_bits, K);
  n_out = std::min(n_out, model.hyper.M);
  const Vector pi = bank.expected_pi();
  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return pi[i] > pi[j]; });
  TopBitsTable table;
  table.factors.assign(order.begin(), order.begin() + n_bits);
  for (unsigned p = 0; p < (1U << n_bits); ++p) {
    BinaryCode z(static_cast<std::size_t>(K), 0);
    TopBitsRow row;
    for (int i = 0; i < n_bits; ++i) {
      const std::uint8_t bit = (p >> i) & 1U;
      row.pattern.push_back(bit);
      z[static_cast<std::size_t>(table.factors[static_cast<std::size_t>(i)])] = bit;
    }
    const Vector xi = model.net.forward(z);
    std::vector<int> idx(static_cast<std::size_t>(xi.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return xi[i] > xi[j]; });
    for (int r = 0; r < n_out; ++r) {
      row.top_outputs.push_back(idx[static_cast<std::size_t>(r)]);
      row.top_values.push_back(xi[idx[static_cast<std::size_t>(r)]]);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string top_bits_csv(const TopBitsTable& t) {
  std::string out = "pattern";
  for (int f : t.factors) out += ",bit_f" + std::to_string(f);
  const std::size_t n_out = t.rows.empty() ? 0 : t.rows.front().top_outputs.size();
  for (std::size_t r = 0; r < n_out; ++r) {
    out += ",out" + std::to_string(r + 1) + "_index,out" + std::to_string(r + 1) + "_value";
  }
  out += '\n';
  for (std::size_t p = 0; p < t.rows.size(); ++p) {
    out += std::to_string(p);
    for (auto b : t.rows[p].pattern) out += ',' + std::to_string(int(b));
    for (std::size_t r = 0; r < t.rows[p].top_outputs.size(); ++r) {
      out += ',' + std::to_string(t.rows[p].top_outputs[r]) + ',' +
             format_double(t.rows[p].top_values[r]);
    }
    out += '\n';
  }
  return out;
}

inline std::string sharing_csv(const FactorSharing& s) {
  std::string out = "label";
  for (int l : s.labels) out += "," + std::to_string(l);
  out += '\n';
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    out += std::to_string(s.labels[i]);
    for (Eigen::Index j = 0; j < s.sharing.cols(); ++j) {
      out += ',' + format_double(s.sharing(static_cast<Eigen::Index>(i), j));
    }
    out += '\n';
  }
  return out;
}

inline std::string codes_csv(std::span<const SparseCode> codes) {
  std::string out = "index,score,active\n";
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(codes[i].score) + ',';
    for (std::size_t j = 0; j < codes[i].active_set.size(); ++j) {
      if (j) out += ' ';
      out += std::to_string(codes[i].active_set[j]);
    }
    out += '\n';
  }
  return out;
}

/// mu_lambda * f(z) for each coded datum.
inline Matrix reconstruct(const ModelState& model, const Matrix& X,
                          std::span<const SparseCode> codes) {
  Matrix R(X.rows(), static_cast<Eigen::Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Vector f = decode(model, codes[i].z);
    R.col(col) = update_q_lambda(X.col(col), f, model.hyper).mean * f;
  }
  return R;
}

struct ExportReport {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> notices;
};

/// Reconstruction grid and CSV: the first n_show data and their reconstructions.
inline void export_reconstructions(const ModelState& model, const Dataset& data,
                                   std::span<const SparseCode> codes,
                                   const std::filesystem::path& out_dir, ExportReport& report,
                                   int n_show = 100) {
  const auto n = static_cast<Eigen::Index>(std::min<std::size_t>(codes.size(), static_cast<std::size_t>(n_show)));
  const Matrix Xs = data.X.leftCols(n);
  const Matrix R = reconstruct(model, Xs, codes.first(static_cast<std::size_t>(n)));
  std::string csv = "index,kind";
  for (Eigen::Index d = 0; d < Xs.rows(); ++d) csv += ",v" + std::to_string(d);
  csv += '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int kind = 0; kind < 2; ++kind) {
      csv += std::to_string(i) + (kind ? ",reconstruction" : ",original");
      const auto col = kind ? R.col(i) : Xs.col(i);
      for (Eigen::Index d = 0; d < col.size(); ++d) csv += ',' + format_double(col[d]);
      csv += '\n';
    }
  }
  write_file_atomic(out_dir / "reconstructions.csv", csv);
  report.written.push_back(out_dir / "reconstructions.csv");

  if (data.image_rows > 0 && data.image_cols > 0 && n > 0) {
    // Left 10 columns: originals; right 10 columns: reconstructions.
    const int per_side = 10;
    const int grid_rows = static_cast<int>((n + per_side - 1) / per_side);
    std::vector<Vector> cells(static_cast<std::size_t>(grid_rows * 2 * per_side),
                              Vector::Zero(Xs.rows()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int r = static_cast<int>(i) / per_side;
      const int c = static_cast<int>(i) % per_side;
      cells[static_cast<std::size_t>(r * 2 * per_side + c)] = Xs.col(i);
      cells[static_cast<std::size_t>(r * 2 * per_side + per_side + c)] = R.col(i);
    }
    write_file_atomic(out_dir / "reconstruction_grid.pgm",
                      pgm_grid(cells, grid_rows, 2 * per_side, data.image_rows, data.image_cols));
    report.written.push_back(out_dir / "reconstruction_grid.pgm");
  } else {
    report.notices.push_back("data carry no image shape; reconstruction PGM skipped");
  }
}

/// Writes the data behind all four figures into out_dir:
/// reconstructions, factor sharing between labels, the top-bit combinatorial
/// table, and the E[pi] trace (when a trace is supplied).
inline ExportReport export_figures(const ModelState& model, const BetaPosteriorBank& bank,
                                   const Dataset& data, std::span<const SparseCode> codes,
                                   const std::filesystem::path& out_dir,
                                   std::span<const PiSnapshot> pi_trace = {}) {
  ExportReport report;
  std::filesystem::create_directories(out_dir);
  export_reconstructions(model, data, codes, out_dir, report);

  if (data.labels) {
    const auto& labels = *data.labels;
    const std::size_t n = std::min(labels.size(), codes.size());
    const FactorSharing fs = factor_sharing(codes.first(n), std::span(labels).first(n), model.hyper.K);
    write_file_atomic(out_dir / "factor_sharing.csv", sharing_csv(fs));
    report.written.push_back(out_dir / "factor_sharing.csv");
  } else {
    report.notices.push_back("no labels; factor-sharing export skipped");
  }

  write_file_atomic(out_dir / "top_bits.csv", top_bits_csv(top_bits_table(model, bank)));
  report.written.push_back(out_dir / "top_bits.csv");

  // Dictionary atoms, one per row, for the factor-loading panel.
  write_file_atomic(out_dir / "dictionary.csv", matrix_to_csv(model.phi));
  report.written.push_back(out_dir / "dictionary.csv");

  std::vector<PiSnapshot> trace(pi_trace.begin(), pi_trace.end());
  if (trace.empty()) trace.push_back({0, bank.expected_pi()});
  write_file_atomic(out_dir / "pi_trace.csv", pi_trace_csv(trace));
  report.written.push_back(out_dir / "pi_trace.csv");
  return report;
}

}  // namespace bpdc
