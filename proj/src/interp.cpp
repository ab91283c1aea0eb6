#include "kmv/interp.hpp"

#include <cmath>

#include "kmv/error.hpp"
#include "kmv/fft.hpp"

namespace kmv {

double wrap_coordinate(double z, double L) {
  const double P = 2 * L;
  double r = std::fmod(z + L, P);
  if (r < 0) r += P;
  if (r >= P) r -= P;
  return r - L;
}

PeriodicInterpolator::PeriodicInterpolator(GridField f) : f_(std::move(f)) {
  KMV_DEMAND(f_.grid().dim() <= 6, "interpolation supports N <= 6");
}

namespace {

// Stencil base index and the four cubic Lagrange weights at offsets -1..2.
void stencil(double z, double L, double h, int n, int& base, double w[4]) {
  const double u = (wrap_coordinate(z, L) + L) / h;
  double fl = std::floor(u);
  const double s = u - fl;
  base = static_cast<int>(fl) % n;
  w[0] = -s * (s - 1) * (s - 2) / 6.0;
  w[1] = (s + 1) * (s - 1) * (s - 2) / 2.0;
  w[2] = -(s + 1) * s * (s - 2) / 2.0;
  w[3] = (s + 1) * s * (s - 1) / 6.0;
}

}  // namespace

void PeriodicInterpolator::eval_all(const double* z, double* out) const {
  const AnisoGrid& g = f_.grid();
  const int N = g.dim();
  int base[6];
  double w[6][4];
  for (int k = 0; k < N; ++k) {
    stencil(z[k], g.half_extent(k), g.spacing(k), g.points(k), base[k], w[k]);
  }
  const int C = f_.channels();
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  int total = 1;
  for (int k = 0; k < N; ++k) total *= 4;
  for (int combo = 0; combo < total; ++combo) {
    double weight = 1.0;
    std::size_t p = 0;
    int r = combo;
    for (int k = N - 1; k >= 0; --k) {
      const int o = r % 4;
      r /= 4;
      weight *= w[k][o];
      const int n = g.points(k);
      const int i = ((base[k] + o - 1) % n + n) % n;
      p += static_cast<std::size_t>(i) * g.stride(k);
    }
    for (int c = 0; c < C; ++c) out[c] += weight * f_.at(p, c);
  }
}

double PeriodicInterpolator::operator()(const double* z, int channel) const {
  const AnisoGrid& g = f_.grid();
  const int N = g.dim();
  int base[6];
  double w[6][4];
  for (int k = 0; k < N; ++k) {
    stencil(z[k], g.half_extent(k), g.spacing(k), g.points(k), base[k], w[k]);
  }
  int total = 1;
  for (int k = 0; k < N; ++k) total *= 4;
  const double* v = f_.channel(channel);
  double acc = 0.0;
  for (int combo = 0; combo < total; ++combo) {
    double weight = 1.0;
    std::size_t p = 0;
    int r = combo;
    for (int k = N - 1; k >= 0; --k) {
      const int o = r % 4;
      r /= 4;
      weight *= w[k][o];
      const int n = g.points(k);
      const int i = ((base[k] + o - 1) % n + n) % n;
      p += static_cast<std::size_t>(i) * g.stride(k);
    }
    acc += weight * v[p];
  }
  return acc;
}

GridField upsample(const GridField& f, int factor) {
  KMV_DEMAND(factor >= 1, "upsampling factor must be >= 1");
  if (factor == 1) return f;
  const AnisoGrid& cg = f.grid();
  std::vector<int> pts(cg.dim());
  for (int k = 0; k < cg.dim(); ++k) pts[k] = cg.points(k) * factor;
  return SpectralResampler(cg, AnisoGrid(cg.blocks(), cg.half_extents(), pts)).apply(f);
}

}  // namespace kmv
