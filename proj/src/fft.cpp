#include "kmv/fft.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "kmv/error.hpp"

namespace kmv {

namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// Plans are created once per shape under a lock and executed through the
// new-array interface, which FFTW documents as thread safe.
class PlanCache {
 public:
  static PlanCache& Get() {
    static PlanCache cache;
    return cache;
  }

  PlanPair For(const std::vector<int>& shape) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(shape);
    if (it != plans_.end()) return it->second;
    std::size_t n = 1;
    for (int s : shape) n *= s;
    std::size_t nc = n / shape.back() * (shape.back() / 2 + 1);
    double* r = fftw_alloc_real(n);
    fftw_complex* c = fftw_alloc_complex(nc);
    const int rank = static_cast<int>(shape.size());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    PlanPair p;
    p.forward = fftw_plan_dft_r2c(rank, shape.data(), r, c, flags);
    p.inverse = fftw_plan_dft_c2r(rank, shape.data(), c, r, flags);
    fftw_free(r);
    fftw_free(c);
    plans_.emplace(shape, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::vector<int>, PlanPair> plans_;
};

thread_local std::vector<cplx> tl_scratch;

}  // namespace

void fft_forward(const AnisoGrid& grid, const double* in, cplx* out) {
  const PlanPair p = PlanCache::Get().For(grid.points());
  fftw_execute_dft_r2c(p.forward, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

Spectrum fft_forward(const AnisoGrid& grid, const double* in) {
  Spectrum out(grid.spectral_size());
  fft_forward(grid, in, out.data());
  return out;
}

void fft_inverse(const AnisoGrid& grid, const cplx* in, double* out) {
  const PlanPair p = PlanCache::Get().For(grid.points());
  tl_scratch.assign(in, in + grid.spectral_size());
  fftw_execute_dft_c2r(p.inverse, reinterpret_cast<fftw_complex*>(tl_scratch.data()), out);
  const double s = 1.0 / static_cast<double>(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] *= s;
}

void fft_line_forward(int n, const double* in, cplx* out) {
  const PlanPair p = PlanCache::Get().For({n});
  fftw_execute_dft_r2c(p.forward, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void fft_line_inverse(int n, cplx* in, double* out) {
  const PlanPair p = PlanCache::Get().For({n});
  fftw_execute_dft_c2r(p.inverse, reinterpret_cast<fftw_complex*>(in), out);
  const double s = 1.0 / n;
  for (int i = 0; i < n; ++i) out[i] *= s;
}

SpectralResampler::SpectralResampler(const AnisoGrid& from, const AnisoGrid& to)
    : from_(from), to_(to) {
  const int N = from.dim();
  KMV_DEMAND(to.dim() == N, "resampling between grids of different dimension");
  for (int k = 0; k < N; ++k) {
    KMV_DEMAND(std::abs(from.half_extent(k) - to.half_extent(k)) <= 1e-12 * from.half_extent(k),
               "resampling between different boxes");
    if (from.points(k) != to.points(k)) identity_ = false;
  }
  if (identity_) return;
  scale_ = static_cast<double>(to.size()) / static_cast<double>(from.size());
  const auto& fshape = from.spectral_shape();
  const auto& tshape = to.spectral_shape();
  std::vector<int> idx(N, 0);
  for (std::size_t s = 0; s < from.spectral_size(); ++s) {
    bool keep = true;
    std::size_t q = 0;
    std::size_t stride = 1;
    for (int k = N - 1; k >= 0 && keep; --k) {
      const int nf = from.points(k), nt = to.points(k);
      const int i = idx[k];
      int m = (k == N - 1 || i <= nf / 2) ? i : i - nf;  // signed mode
      if (nf != nt && 2 * std::abs(m) >= std::min(nf, nt)) keep = false;
      const int ti = m >= 0 ? m : m + nt;
      q += static_cast<std::size_t>(ti) * stride;
      stride *= tshape[k];
    }
    if (keep) map_.emplace_back(s, q);
    for (int k = N - 1; k >= 0; --k) {
      if (++idx[k] < fshape[k]) break;
      idx[k] = 0;
    }
  }
}

void SpectralResampler::map_spectrum(const cplx* in, cplx* out) const {
  std::fill(out, out + to_.spectral_size(), cplx(0.0));
  for (const auto& [a, b] : map_) out[b] = in[a] * scale_;
}

void SpectralResampler::apply(const double* in, double* out) const {
  if (identity_) {
    std::copy(in, in + from_.size(), out);
    return;
  }
  const Spectrum a = fft_forward(from_, in);
  Spectrum b(to_.spectral_size());
  map_spectrum(a.data(), b.data());
  fft_inverse(to_, b.data(), out);
}

GridField SpectralResampler::apply(const GridField& f) const {
  KMV_DEMAND(f.grid() == from_, "resampler applied to a field on another grid");
  GridField out(to_, f.channels());
  for (int c = 0; c < f.channels(); ++c) apply(f.channel(c), out.channel(c));
  return out;
}

}  // namespace kmv
