#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kmv/anisotropy.hpp"
#include "kmv/grid.hpp"
#include "kmv/kernels.hpp"

namespace kmv {

/// C(t) = int_0^t e^{sB} A e^{sB^T} ds from the exponential of the 2N x 2N
/// block matrix [[-B, A], [0, B^T]] t.  Throws NotHypoelliptic when C(t) is
/// not positive definite.
Eigen::MatrixXd covariance(const KolmogorovModel& model, double t);

/// Same without the definiteness check (t >= 0).
Eigen::MatrixXd covariance_unchecked(const KolmogorovModel& model, double t);

/// Per-time exponentials and Gaussian data, precomputed for a mesh.
struct KernelCache {
  struct Entry {
    double t = 0.0;
    Eigen::MatrixXd expB;
    Eigen::MatrixXd C;
    Eigen::MatrixXd C_inv;
    double det_C = 0.0;
    /// log of (2 pi)^{-N/2} det C^{-1/2}.
    double log_normalizer = 0.0;
  };
  KolmogorovModel model;
  std::vector<Entry> entries;

  static KernelCache Build(const KolmogorovModel& model, const std::vector<double>& times);
};

/// Gaussian density Gamma_t(z) with covariance C(t).
double gamma_density(const KolmogorovModel& model, double t, const Eigen::VectorXd& z);

/// Samples of the mean-zero Gaussian with covariance C on the grid, computed
/// from its Fourier transform (periodized, unit mass).
GridField gaussian_on_grid(const AnisoGrid& grid, const Eigen::MatrixXd& C);

/// exp(-<C xi, xi>/2) on the half spectrum.
std::vector<double> gaussian_multiplier(const AnisoGrid& grid, const Eigen::MatrixXd& C);

/// True when every marginal standard deviation of C spans at least one cell.
bool is_resolved(const AnisoGrid& grid, const Eigen::MatrixXd& C);

/// Grid on the same box refined per axis so that fields sheared by e^{sB},
/// |s| <= t_abs, stay band-limited (no wrap-around of sheared frequencies).
/// Needed wherever a long shear is paired with little smoothing, as in the
/// comoving Duhamel integrator.
AnisoGrid shear_padded_grid(const KolmogorovModel& model, const AnisoGrid& grid, double t_abs);

/// P_t f = (S_{C(t)} f) o e^{tB} and its grid adjoint P'_t.  The lab-frame
/// shear by t is damped by S_{C(t)}, so these run on the grid itself.
GridField apply_P(const KolmogorovModel& model, double t, const GridField& f,
                  Exec exec = Exec::kParallel);
GridField apply_Pprime(const KolmogorovModel& model, double t, const GridField& f,
                       Exec exec = Exec::kParallel);

/// Generator A psi = 1/2 Delta_v psi + <B z, grad psi>, spectrally.
GridField generator_apply(const KolmogorovModel& model, const GridField& psi);

struct SchauderRow {
  double gamma = 0.0;
  double alpha = 0.0;
  double t = 0.0;
  int field_id = 0;
  /// ||P'_t f||_{gamma+alpha} t^{alpha/2} / ||f||_gamma; ratio_P for P_t.
  double ratio = 0.0;
  double ratio_P = 0.0;
  double norm_in = 0.0;
  double norm_out = 0.0;
  double norm_out_P = 0.0;
};

struct SchauderReport {
  std::vector<SchauderRow> rows;
  std::vector<double> t_list;
  /// max over fields of ||P'_t f||_{gamma+alpha}, per t.
  std::vector<double> max_norm_out;
  /// Regression slope of log max_norm_out against log t (and the P_t analog).
  double slope = 0.0;
  double slope_P = 0.0;
  double max_ratio = 0.0;
  /// max / min of the running maximum (in increasing t) of max_f R(t, f).
  double running_max_spread = 0.0;
};

SchauderReport schauder_probe(const KolmogorovModel& model, double gamma, double alpha,
                              std::vector<double> t_list,
                              const std::vector<GridField>& samples);

void write_schauder_csv(const std::string& path, const SchauderReport& report);

struct BlockDecayRow {
  double t = 0.0;
  int j = 0;
  double l1_norm = 0.0;
};

struct BlockDecayReport {
  std::vector<BlockDecayRow> rows;
  /// Fitted slope of log ||Delta_j Gamma_t||_{L1} against log(t 4^j) on the
  /// rows with t 4^j in [fit_lo, fit_hi].
  double slope = 0.0;
  double fit_lo = 4.0;
  double fit_hi = 64.0;
  int fit_points = 0;
};

BlockDecayReport kernel_block_decay(const KolmogorovModel& model, const AnisoGrid& grid,
                                    const std::vector<double>& t_list,
                                    const std::vector<int>& j_list, double fit_lo = 4.0,
                                    double fit_hi = 64.0);

void write_block_decay_csv(const std::string& path, const BlockDecayReport& report);

/// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace kmv
