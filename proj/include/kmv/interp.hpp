#pragma once

#include <vector>

#include <Eigen/Dense>

#include "kmv/grid.hpp"

namespace kmv {

/// Periodic tensor-product cubic Lagrange interpolation of a GridField at
/// arbitrary points (coordinates are wrapped into the box).
class PeriodicInterpolator {
 public:
  PeriodicInterpolator() = default;
  explicit PeriodicInterpolator(GridField f);

  const GridField& field() const { return f_; }
  double operator()(const double* z, int channel = 0) const;
  double operator()(const Eigen::VectorXd& z, int channel = 0) const {
    return (*this)(z.data(), channel);
  }
  /// All channels at once.
  void eval_all(const double* z, double* out) const;

 private:
  GridField f_;
};

/// Band-limited refinement by zero padding in Fourier space: the result
/// lives on a grid with `factor` times more points per axis.  The coarse
/// Nyquist modes are dropped.
GridField upsample(const GridField& f, int factor);

/// Wraps a coordinate into [-L, L).
double wrap_coordinate(double z, double L);

}  // namespace kmv
