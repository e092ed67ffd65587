#pragma once

#include <algorithm>
#include <array>

#include "bpdc/dataset.hpp"
#include "bpdc/rng.hpp"

namespace bpdc {

/// Seven-segment digits rendered into rows x cols images with random shift,
/// stroke width, intensity and pixel noise. Pixels lie in [0, 1]. A small
/// stand-in for handwritten digits when no IDX files are at hand.
inline Dataset make_glyph_digits(int n, Rng& rng, int rows = 16, int cols = 16,
                                 double noise_sd = 0.05) {
  if (n < 0 || rows < 10 || cols < 8) throw DomainError("make_glyph_digits: bad size");
  //                                        a  b  c  d  e  f  g
  static constexpr std::array<std::array<int, 7>, 10> kSegments{{{1, 1, 1, 1, 1, 1, 0},
                                                                 {0, 1, 1, 0, 0, 0, 0},
                                                                 {1, 1, 0, 1, 1, 0, 1},
                                                                 {1, 1, 1, 1, 0, 0, 1},
                                                                 {0, 1, 1, 0, 0, 1, 1},
                                                                 {1, 0, 1, 1, 0, 1, 1},
                                                                 {1, 0, 1, 1, 1, 1, 1},
                                                                 {1, 1, 1, 0, 0, 0, 0},
                                                                 {1, 1, 1, 1, 1, 1, 1},
                                                                 {1, 1, 1, 1, 0, 1, 1}}};
  Dataset ds;
  ds.X = Matrix::Zero(rows * cols, n);
  ds.labels = std::vector<int>(static_cast<std::size_t>(n));
  ds.image_rows = rows;
  ds.image_cols = cols;
  ds.scaling = Scaling::kUnitInterval;
  const int w = cols / 2, h = rows - 4;
  for (int i = 0; i < n; ++i) {
    const int digit = static_cast<int>(rng.uniform_index(10));
    (*ds.labels)[static_cast<std::size_t>(i)] = digit;
    const int x0 = (cols - w) / 2 + static_cast<int>(rng.uniform_index(3)) - 1;
    const int y0 = 2 + static_cast<int>(rng.uniform_index(3)) - 1;
    const int thick = 1 + static_cast<int>(rng.uniform_index(2));
    const double ink = 0.7 + 0.3 * rng.uniform();
    auto paint = [&](int r0, int c0, int r1, int c1) {
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          if (r >= 0 && r < rows && c >= 0 && c < cols) ds.X(r * cols + c, i) = ink;
        }
      }
    };
    const int mid = y0 + h / 2;
    const auto& s = kSegments[static_cast<std::size_t>(digit)];
    if (s[0]) paint(y0, x0, y0 + thick - 1, x0 + w - 1);
    if (s[1]) paint(y0, x0 + w - thick, mid, x0 + w - 1);
    if (s[2]) paint(mid, x0 + w - thick, y0 + h - 1, x0 + w - 1);
    if (s[3]) paint(y0 + h - thick, x0, y0 + h - 1, x0 + w - 1);
    if (s[4]) paint(mid, x0, y0 + h - 1, x0 + thick - 1);
    if (s[5]) paint(y0, x0, mid, x0 + thick - 1);
    if (s[6]) paint(mid - thick / 2, x0, mid - thick / 2 + thick - 1, x0 + w - 1);
    for (int d = 0; d < rows * cols; ++d) {
      ds.X(d, i) = std::clamp(ds.X(d, i) + noise_sd * rng.normal(), 0.0, 1.0);
    }
  }
  return ds;
}

}  // namespace bpdc
