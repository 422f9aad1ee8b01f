#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

namespace attnlab {

// exp() on a hot path: branch-free Cephes-style rational approximation,
// accurate to ~1 ulp over the normal range. The softmax loops are exp-bound
// without this (libm exp costs as much as the surrounding dgemm calls).
inline double fast_exp(double x) {
  constexpr double kLog2e = 1.4426950408889634073599;
  constexpr double kC1 = 6.93145751953125e-1;
  constexpr double kC2 = 1.42860682030941723212e-6;
  if (x > 709.0) return std::numeric_limits<double>::infinity();
  if (x < -709.0) return 0.0;
  double n = std::nearbyint(x * kLog2e);
  double r = x - n * kC1;
  r -= n * kC2;
  const double rr = r * r;
  // exp(r) = 1 + 2r P(r^2) / (Q(r^2) - r P(r^2))
  double p = r * (1.26177193074810590878e-4 * rr * rr +
                  3.02994407707441961300e-2 * rr +
                  9.99999999999999999910e-1);
  double q = 3.00198505138664455042e-6 * rr * rr * rr +
             2.52448340349684104192e-3 * rr * rr +
             2.27265548208155028766e-1 * rr + 2.00000000000000000005e0;
  double e = 1.0 + 2.0 * p / (q - p);
  // scale by 2^n through the exponent bits
  const std::int64_t bits = (static_cast<std::int64_t>(n) + 1023) << 52;
  double scale;
  std::memcpy(&scale, &bits, sizeof scale);
  return e * scale;
}

// Percentile by linear interpolation on the sorted sample, p in [0, 100].
inline double percentile(std::vector<double> xs, double p) {
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  if (xs.size() == 1) return xs[0];
  const double pos = (p / 100.0) * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? std::nan("") : s / static_cast<double>(xs.size());
}

inline double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double median_of(std::vector<double> xs) { return percentile(std::move(xs), 50.0); }

// FNV-1a over a byte string; used for config hashes in manifests.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

inline std::string encode_f64(const std::vector<double>& v) {
  return base64_encode(reinterpret_cast<const unsigned char*>(v.data()),
                       v.size() * sizeof(double));
}

inline std::vector<double> decode_f64(const std::string& text) {
  const auto bytes = base64_decode(text);
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(double));
  return out;
}

}  // namespace attnlab
