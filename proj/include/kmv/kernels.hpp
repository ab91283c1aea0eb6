#pragma once

#include <vector>

#include <Eigen/Dense>

#include "kmv/grid.hpp"

namespace kmv {

/// Every data-parallel kernel has an OpenMP path and a serial reference path
/// that must agree to round-off; tests and the benchmark compare the two.
enum class Exec { kParallel, kSerial };

/// Linear change of variables g -> g o L on the periodic grid.  L is factored
/// (LU without pivoting) into single-row maps; each row map is a 1-D resample
/// along one axis: a spectral shift when its diagonal entry is 1, otherwise a
/// direct trigonometric interpolation.  The coordinates that feed a shift must
/// carry functions that vanish near the box boundary for the result to be
/// meaningful; the operation itself is always well defined on the torus.
class Warp {
 public:
  Warp() = default;
  Warp(const AnisoGrid& grid, const Eigen::MatrixXd& L);

  bool is_identity() const { return ops_.empty(); }

  /// out = in o L for one channel; in and out may alias.
  void apply(const double* in, double* out, Exec exec = Exec::kParallel) const;
  /// Exact grid adjoint of apply().
  void apply_adjoint(const double* in, double* out, Exec exec = Exec::kParallel) const;

  GridField apply(const GridField& f, Exec exec = Exec::kParallel) const;
  GridField apply_adjoint(const GridField& f, Exec exec = Exec::kParallel) const;

 private:
  struct LineOp {
    int axis = 0;
    double scale = 1.0;
    std::vector<double> coeff;  // shift = sum_{j != axis} coeff[j] z_j
  };

  void run_op(const LineOp& op, bool adjoint, double* data, Exec exec) const;

  AnisoGrid grid_;
  std::vector<LineOp> ops_;
};

}  // namespace kmv
