#pragma once

#include <complex>
#include <vector>

#include "kmv/grid.hpp"

namespace kmv {

using cplx = std::complex<double>;
using Spectrum = std::vector<cplx>;

/// Real-to-complex transform of one channel onto the grid's half spectrum
/// (unnormalized, FFTW sign convention).  Reentrant.
void fft_forward(const AnisoGrid& grid, const double* in, cplx* out);
Spectrum fft_forward(const AnisoGrid& grid, const double* in);

/// Inverse of fft_forward including the 1/size normalization.  The input is
/// left untouched.
void fft_inverse(const AnisoGrid& grid, const cplx* in, double* out);

/// 1-D transforms of length n on contiguous buffers (n/2+1 complex outputs).
void fft_line_forward(int n, const double* in, cplx* out);
/// Normalized inverse; `in` is clobbered.
void fft_line_inverse(int n, cplx* in, double* out);

/// Band-limited transfer between two grids on the same box: zero padding
/// when refining an axis, truncation when coarsening it.  On axes whose
/// point counts differ the Nyquist modes of the coarser one are dropped, so
/// refine-then-coarsen is the identity off those modes and the two
/// directions are adjoint for the cell-weighted inner product.
class SpectralResampler {
 public:
  SpectralResampler() = default;
  SpectralResampler(const AnisoGrid& from, const AnisoGrid& to);

  const AnisoGrid& from() const { return from_; }
  const AnisoGrid& to() const { return to_; }
  bool identity() const { return identity_; }

  /// Maps a spectrum of `from` onto one of `to` (out is overwritten).
  void map_spectrum(const cplx* in, cplx* out) const;
  void apply(const double* in, double* out) const;
  GridField apply(const GridField& f) const;

 private:
  AnisoGrid from_, to_;
  bool identity_ = true;
  double scale_ = 1.0;
  std::vector<std::pair<std::size_t, std::size_t>> map_;
};

}  // namespace kmv
