#pragma once

#include <complex>
#include <vector>

namespace pgr::dsp {

using cplx = std::complex<double>;

// In-place iterative radix-2 FFT; size must be a power of two. The
// inverse transform scales by 1/n.
void fft(std::vector<cplx>& a, bool inverse);

size_t next_pow2(size_t n);

// Rational-rate polyphase resampler (Kaiser-windowed sinc, beta 8.6,
// 64 taps per phase, each phase normalized to unit DC gain). Samples
// outside the input are taken as zero. up = down = 1 is an exact
// passthrough.
std::vector<cplx> resample(const std::vector<cplx>& x, int up, int down);

}  // namespace pgr::dsp
