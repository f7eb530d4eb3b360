#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "osr/error.hpp"

namespace osr {

// Bilinear resize with pixel-center alignment and edge-clamped sampling.
// Identity when source and target sizes match.
template <class T>
std::vector<T> bilinear_resize(const std::vector<T>& src, int sh, int sw, int th, int tw) {
  if (sh <= 0 || sw <= 0 || th <= 0 || tw <= 0) throw ConfigError("bilinear_resize: sizes must be positive");
  if (static_cast<size_t>(sh) * sw != src.size()) throw ConfigError("bilinear_resize: source size mismatch");
  if (sh == th && sw == tw) return src;

  std::vector<T> dst(static_cast<size_t>(th) * tw);
  const double sy = static_cast<double>(sh) / th;
  const double sx = static_cast<double>(sw) / tw;
  for (int y = 0; y < th; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < tw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src[static_cast<size_t>(y0) * sw + x0] +
                         wx * src[static_cast<size_t>(y0) * sw + x1];
      const double bot = (1.0 - wx) * src[static_cast<size_t>(y1) * sw + x0] +
                         wx * src[static_cast<size_t>(y1) * sw + x1];
      dst[static_cast<size_t>(y) * tw + x] = static_cast<T>((1.0 - wy) * top + wy * bot);
    }
  }
  return dst;
}

}  // namespace osr
