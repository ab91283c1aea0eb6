#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kmv/anisotropy.hpp"
#include "kmv/fft.hpp"
#include "kmv/grid.hpp"
#include "kmv/kernels.hpp"

namespace kmv {

/// Time quadrature for Duhamel integrals of the Gaussian semigroups.
///  - kExponential: data linear in s between mesh nodes (in the frame moving
///    with the flow), integrated exactly against the Gaussian multiplier by
///    graded Gauss-Legendre panels.  Default.
///  - kProductFrozen / kProductLinear: the semigroup image is frozen
///    (piecewise constant / linear in s) and only the weight |t - s|^{-kappa}
///    is integrated in closed form.
enum class QuadratureRule { kExponential, kProductFrozen, kProductLinear };

QuadratureRule parse_quadrature_rule(const std::string& name);
std::string to_string(QuadratureRule rule);

enum class Direction {
  /// out_i = int_{t_0}^{t_i} P'_{t_i - s} D_s ds
  kForward,
  /// out_i = int_{t_i}^{t_end} e^{-lambda (s - t_i)} P_{s - t_i} D_s ds
  kBackward,
};

struct DuhamelOptions {
  QuadratureRule rule = QuadratureRule::kExponential;
  /// Singular exponent for the product rules.
  double kappa = 0.5;
  double lambda = 0.0;
  /// Byte budget for caching the per-frequency weights.
  double cache_bytes = 1.2e9;
  /// Geometric panels on the interval touching the diagonal s = t_i.
  int graded_panels = 16;
};

class Duhamel {
 public:
  Duhamel(KolmogorovModel model, AnisoGrid grid, double t0, double t1, int n_points,
          Direction direction, DuhamelOptions options = {});
  ~Duhamel();
  Duhamel(Duhamel&&) noexcept;
  Duhamel& operator=(Duhamel&&) noexcept;

  int n_points() const { return n_points_; }
  const KolmogorovModel& model() const { return model_; }
  const AnisoGrid& grid() const { return grid_; }
  const AnisoGrid& work_grid() const { return work_; }
  Direction direction() const { return direction_; }
  const DuhamelOptions& options() const { return opt_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  double time(int i) const { return t0_ + (t1_ - t0_) * i / (n_points_ - 1); }
  bool weights_cached() const;

  /// data: one single-channel field per mesh time.
  std::vector<GridField> integrate(const std::vector<GridField>& data,
                                   Exec exec = Exec::kParallel) const;

 private:
  struct Row {
    int k_begin = 0;
    std::vector<std::vector<double>> c;  // c[k - k_begin][spectral index]
  };
  struct Cache;

  Row compute_row(int i) const;

  KolmogorovModel model_;
  AnisoGrid grid_;
  /// Shear-padded grid on which the comoving spectra live.
  AnisoGrid work_;
  SpectralResampler up_, down_;
  double t0_ = 0.0;
  double t1_ = 1.0;
  int n_points_ = 0;
  Direction direction_ = Direction::kForward;
  DuhamelOptions opt_;
  std::unique_ptr<Cache> cache_;
};

}  // namespace kmv
