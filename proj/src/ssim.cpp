#include "mcaae/ssim.hpp"

#include <algorithm>
#include <string>

#include "mcaae/error.hpp"

namespace mcaae {

namespace {

void check(std::span<const double> a, std::span<const double> b, std::size_t h, std::size_t w,
           const SsimParams& p) {
  if (a.size() != b.size()) throw DimensionError("ssim: images differ in size");
  if (h * w != a.size() || h == 0 || w == 0) {
    throw DimensionError("ssim: " + std::to_string(a.size()) + " pixels do not form a " + std::to_string(h) + "x" +
                         std::to_string(w) + " image");
  }
  if (p.window == 0) throw ValidationError("ssim: window must be positive");
}

struct WindowStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

template <typename Fn>
void for_each_window(std::size_t h, std::size_t w, std::size_t win, Fn&& fn) {
  for (std::size_t r0 = 0; r0 < h; r0 += win) {
    for (std::size_t c0 = 0; c0 < w; c0 += win) fn(r0, std::min(r0 + win, h), c0, std::min(c0 + win, w));
  }
}

WindowStats stats(std::span<const double> a, std::span<const double> b, std::size_t w, std::size_t r0,
                  std::size_t r1, std::size_t c0, std::size_t c1) {
  const double n = static_cast<double>((r1 - r0) * (c1 - c0));
  double sa = 0, sb = 0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      sa += a[r * w + c];
      sb += b[r * w + c];
    }
  }
  WindowStats s{sa / n, sb / n, 0, 0, 0};
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double da = a[r * w + c] - s.mu_a;
      const double db = b[r * w + c] - s.mu_b;
      s.var_a += da * da;
      s.var_b += db * db;
      s.cov += da * db;
    }
  }
  s.var_a /= n;
  s.var_b /= n;
  s.cov /= n;
  return s;
}

}  // namespace

double ssim(std::span<const double> a, std::span<const double> b, std::size_t height, std::size_t width,
            const SsimParams& p) {
  check(a, b, height, width, p);
  double total = 0;
  std::size_t windows = 0;
  for_each_window(height, width, p.window, [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    const WindowStats s = stats(a, b, width, r0, r1, c0, c1);
    const double num = (2 * s.mu_a * s.mu_b + p.c1) * (2 * s.cov + p.c2);
    const double den = (s.mu_a * s.mu_a + s.mu_b * s.mu_b + p.c1) * (s.var_a + s.var_b + p.c2);
    total += num / den;
    ++windows;
  });
  return total / static_cast<double>(windows);
}

double ssim(const Tensor& a, const Tensor& b, const SsimParams& p) {
  if (a.rank() != 2 || a.shape() != b.shape()) throw DimensionError("ssim: expects two images of equal shape");
  return ssim(a.data(), b.data(), a.shape()[0], a.shape()[1], p);
}

double ssim_with_gradient(std::span<const double> a, std::span<const double> b, std::size_t height,
                          std::size_t width, std::span<double> grad_a, const SsimParams& p) {
  check(a, b, height, width, p);
  if (grad_a.size() != a.size()) throw DimensionError("ssim: gradient buffer has the wrong size");
  std::size_t windows = 0;
  for_each_window(height, width, p.window, [&](std::size_t, std::size_t, std::size_t, std::size_t) { ++windows; });
  const double inv_windows = 1.0 / static_cast<double>(windows);

  double total = 0;
  for_each_window(height, width, p.window, [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    const WindowStats s = stats(a, b, width, r0, r1, c0, c1);
    const double n = static_cast<double>((r1 - r0) * (c1 - c0));
    const double A1 = 2 * s.mu_a * s.mu_b + p.c1;
    const double A2 = 2 * s.cov + p.c2;
    const double B1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + p.c1;
    const double B2 = s.var_a + s.var_b + p.c2;
    const double value = (A1 * A2) / (B1 * B2);
    total += value;
    // dS/da_i = (2/n) / (B1 B2) * [mu_b A2 + A1 (b_i - mu_b) - S (mu_a B2 + B1 (a_i - mu_a))]
    const double scale = 2.0 / (n * B1 * B2) * inv_windows;
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) {
        const std::size_t i = r * width + c;
        grad_a[i] = scale * (s.mu_b * A2 + A1 * (b[i] - s.mu_b) - value * (s.mu_a * B2 + B1 * (a[i] - s.mu_a)));
      }
    }
  });
  return total * inv_windows;
}

}  // namespace mcaae
