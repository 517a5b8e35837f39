#include "pgr/dsp.hpp"

#include <cmath>
#include <numeric>

#include "pgr/errors.hpp"

namespace pgr::dsp {

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<cplx>& a, bool inverse) {
  size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw input_error("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1 : -1);
    cplx wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    double inv = 1.0 / static_cast<double>(n);
    for (cplx& x : a) x *= inv;
  }
}

namespace {

constexpr int kHalfTaps = 32;  // 64 taps per phase
constexpr double kKaiserBeta = 8.6;

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  double half = 0.5 * x;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double kaiser(double u) {
  if (u < -1.0 || u > 1.0) return 0.0;
  static const double norm = bessel_i0(kKaiserBeta);
  return bessel_i0(kKaiserBeta * std::sqrt(1.0 - u * u)) / norm;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

// Kernel for one fractional phase; taps[i] multiplies x[base + i - 31].
void make_kernel(double frac, double rate_ratio, double* taps) {
  double wsum = 0.0;
  for (int i = 0; i < 2 * kHalfTaps; ++i) {
    double u = (i - (kHalfTaps - 1)) - frac;
    double w = rate_ratio * sinc(rate_ratio * u) * kaiser(u / kHalfTaps);
    taps[i] = w;
    wsum += w;
  }
  for (int i = 0; i < 2 * kHalfTaps; ++i) taps[i] /= wsum;
}

}  // namespace

std::vector<cplx> resample(const std::vector<cplx>& x, int up, int down) {
  if (up < 1 || down < 1)
    throw input_error("resample: up and down must be >= 1");
  int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return x;

  double ratio = up >= down ? 1.0 : static_cast<double>(up) / down;
  int64_t in_len = static_cast<int64_t>(x.size());
  int64_t out_len = in_len * up / down;
  std::vector<cplx> y(static_cast<size_t>(out_len));

  // One kernel per residue of m*down mod up; cached when the phase
  // count is small enough to matter.
  std::vector<std::vector<double>> cache;
  bool use_cache = up <= 65536;
  if (use_cache) cache.resize(up);
  double scratch[2 * kHalfTaps];

  for (int64_t m = 0; m < out_len; ++m) {
    int64_t num = m * down;
    int64_t base = num / up;
    int64_t rem = num % up;
    const double* taps;
    if (use_cache) {
      std::vector<double>& k = cache[static_cast<size_t>(rem)];
      if (k.empty()) {
        k.resize(2 * kHalfTaps);
        make_kernel(static_cast<double>(rem) / up, ratio, k.data());
      }
      taps = k.data();
    } else {
      make_kernel(static_cast<double>(rem) / up, ratio, scratch);
      taps = scratch;
    }
    double re = 0.0, im = 0.0;
    for (int i = 0; i < 2 * kHalfTaps; ++i) {
      int64_t src = base + i - (kHalfTaps - 1);
      if (src < 0 || src >= in_len) continue;
      re += taps[i] * x[static_cast<size_t>(src)].real();
      im += taps[i] * x[static_cast<size_t>(src)].imag();
    }
    y[static_cast<size_t>(m)] = cplx(re, im);
  }
  return y;
}

}  // namespace pgr::dsp
