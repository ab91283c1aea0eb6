#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "kmv/fft.hpp"
#include "kmv/grid.hpp"
#include "kmv/kernels.hpp"

namespace kmv {

/// Smooth step: 1 on [0, 1/2], 0 on [2/3, inf), C-infinity in between.
double lp_chi(double s);

/// Values of rho_j, j = -1..J_max, on the half spectrum of a grid.  The top
/// block is 1 - rho_{-1}(2^{-J_max} .), so the rows sum to one everywhere.
class Partition {
 public:
  explicit Partition(const AnisoGrid& grid);

  int J_max() const { return J_max_; }
  /// Row for block j (j = -1..J_max).
  const std::vector<double>& row(int j) const { return rows_[j + 1]; }
  double rho(int j, std::size_t s) const { return rows_[j + 1][s]; }

 private:
  int J_max_ = -1;
  std::vector<std::vector<double>> rows_;
};

/// Shared (cached) partition for a grid; throws GridTooCoarse if J_max < 2.
std::shared_ptr<const Partition> build_partition(const AnisoGrid& grid);

struct LPDecomposition {
  GridField source;
  /// blocks[j + 1] = Delta_j f.
  std::vector<GridField> blocks;
  std::vector<double> sup_norms;
  int J_max = -1;

  const GridField& block(int j) const { return blocks[j + 1]; }
  double besov_norm(double gamma) const;
  GridField reconstruct() const;
};

LPDecomposition lp_decompose(const GridField& f, Exec exec = Exec::kParallel);

/// sup_{j} 2^{j gamma} ||Delta_j f||_inf over all channels.
double besov_norm(const GridField& f, double gamma, Exec exec = Exec::kParallel);
/// Per-block sup norms ||Delta_j f||_inf, j = -1..J_max.
std::vector<double> block_sup_norms(const GridField& f, Exec exec = Exec::kParallel);
/// Same from a precomputed half spectrum of one channel.
std::vector<double> block_sup_norms(const AnisoGrid& grid, const Spectrum& spec,
                                    Exec exec = Exec::kParallel);
double besov_from_blocks(const std::vector<double>& sup_norms, double gamma);

struct ProductResult {
  GridField product;
  /// ||fg||_{min(alpha,gamma)} / (||f||_alpha ||g||_gamma).
  double ratio = 0.0;
};

/// Band-limited pointwise product standing in for the Bony product.
ProductResult bony_product(const GridField& f, const GridField& g, double alpha,
                           double gamma);

/// Convolution with the rescaled tensor bump Phi_n(z) = n^N Phi(n z), where
/// Phi is supported in [-radius, radius]^N.
GridField mollify(const GridField& f, double n, double radius = 1.0);
TimeField mollify(const TimeField& f, double n, double radius = 1.0);

/// Fourier transform of the unit-mass bump exp(-1/(1-s^2)) on [-1, 1].
double bump_hat(double omega);

struct SynthesisOptions {
  double amplitude = 1.0;
  /// Multiply by a smooth cutoff in every coordinate except the last one
  /// (flat for |z_k| <= flat L_k, zero beyond zero L_k).
  bool window = false;
  double window_flat = 0.6;
  double window_zero = 0.85;
  /// Highest level included (-1: J_max).
  int max_level = -1;
};

/// sum_{j=0}^{J} amplitude 2^{j beta} cos(<xi_j, z> + theta_j) per channel,
/// with xi_j a lattice point picked at random near |xi|_B = 2^j.
GridField synthesize_besov_field(double beta, std::uint64_t seed, const AnisoGrid& grid,
                                 int channels, const SynthesisOptions& opts = {});
/// Time-modulated version b_t = b (1 + sin(2 pi t / T) / 2) on n_points
/// uniform times of [0, T].
TimeField synthesize_besov_field(double beta, std::uint64_t seed, const AnisoGrid& grid,
                                 int channels, double T, int n_points,
                                 const SynthesisOptions& opts = {});

/// ||f||_inf + sampled sup of |f(z+h) - f(z)| / |h|_B^gamma over |h|_B <= 1.
double holder_norm_aniso(const GridField& f, double gamma, std::uint64_t seed = 0,
                         int n_pairs = 100000);

/// Spectral partial derivative d/dz_axis (Nyquist mode dropped).
GridField spectral_derivative(const GridField& f, int axis);
/// sum_{k < d} d/dz_k of channel k of a d-channel field.
GridField divergence_v(const GridField& G);
/// (d/dz_0, ..., d/dz_{d-1}) of a scalar field, as d channels.
GridField gradient_v(const GridField& f);
/// Sum of second derivatives over the first d coordinates.
GridField laplacian_v(const GridField& f);

/// Unit spike at the grid point nearest the origin.
GridField grid_impulse(const AnisoGrid& grid);

struct BernsteinReport {
  int J_max = -1;
  /// gain[k][j + 1] = ||Delta_j d_k f||_inf / ||Delta_j f||_inf.
  std::vector<std::vector<double>> gain;
  /// Per coordinate: slope of log2 gain against j over j = 1..J_max-1.
  /// Expected 2i+1 for a coordinate of block i, provided the grid resolves
  /// the top annulus along every axis.
  std::vector<double> exponent;
};

BernsteinReport bernstein_exponents(const GridField& f);

}  // namespace kmv

