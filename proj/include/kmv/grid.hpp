#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kmv/anisotropy.hpp"

namespace kmv {

/// Periodic box prod_k [-L_k, L_k) sampled with n_k (even) points per axis,
/// together with the Fourier lattice of the real-to-complex half spectrum
/// (last axis truncated to n/2+1 entries).
class AnisoGrid {
 public:
  AnisoGrid() = default;
  AnisoGrid(BlockStructure blocks, std::vector<double> half_extents, std::vector<int> points);

  /// Half extents L_k = L0^{2i+1} for coordinates of block i.
  static AnisoGrid WithDefaultExtents(BlockStructure blocks, std::vector<int> points,
                                      double L0 = 3.141592653589793);

  const BlockStructure& blocks() const { return blocks_; }
  int dim() const { return blocks_.N; }
  const std::vector<double>& half_extents() const { return L_; }
  const std::vector<int>& points() const { return n_; }
  double half_extent(int k) const { return L_[k]; }
  int points(int k) const { return n_[k]; }
  double spacing(int k) const { return 2.0 * L_[k] / n_[k]; }
  double cell_volume() const { return cell_volume_; }
  std::size_t size() const { return size_; }
  /// Row-major stride of axis k (last axis fastest).
  std::size_t stride(int k) const { return strides_[k]; }

  double coord(int k, int i) const { return -L_[k] + i * spacing(k); }
  /// Physical coordinates of flat index p.
  Eigen::VectorXd point(std::size_t p) const;
  void unravel(std::size_t p, int* idx) const;

  /// Angular frequency of full-spectrum index i on axis k, in
  /// (pi/L_k) * {-n_k/2, ..., n_k/2 - 1}.
  double freq(int k, int i) const;
  /// Largest |xi_k| resolvable on axis k.
  double nyquist(int k) const { return 3.141592653589793 * n_[k] / (2.0 * L_[k]); }

  std::size_t spectral_size() const { return spec_size_; }
  const std::vector<int>& spectral_shape() const { return spec_shape_; }
  /// Frequencies of half-spectrum point s: xi_k = spectral_freq(k)[s].
  const std::vector<double>& spectral_freq(int k) const { return cache_->xi[k]; }
  /// True on half-spectrum points carrying a Nyquist index on some axis.
  const std::vector<unsigned char>& spectral_nyquist() const { return cache_->nyq; }
  /// |xi|_B on the half spectrum.
  const std::vector<double>& spectral_norm() const { return cache_->norm; }
  /// Multiplicity of each half-spectrum point in the full spectrum (1 or 2);
  /// used for Parseval sums.
  const std::vector<double>& spectral_weight() const { return cache_->weight; }

  /// Largest representable anisotropic frequency radius: max over axes of
  /// nyquist(k)^{1/(2i_k+1)}.
  double max_radius() const;
  /// Top Littlewood-Paley index: largest j with 2^{j+1} <= max_radius().
  int J_max() const;

  bool operator==(const AnisoGrid& o) const;
  bool operator!=(const AnisoGrid& o) const { return !(*this == o); }

 private:
  struct Cache {
    std::vector<std::vector<double>> xi;
    std::vector<unsigned char> nyq;
    std::vector<double> norm;
    std::vector<double> weight;
  };

  BlockStructure blocks_;
  std::vector<double> L_;
  std::vector<int> n_;
  std::vector<std::size_t> strides_;
  std::vector<int> spec_shape_;
  std::size_t size_ = 0;
  std::size_t spec_size_ = 0;
  double cell_volume_ = 0.0;
  std::shared_ptr<const Cache> cache_;
};

/// Real, possibly vector-valued samples on an AnisoGrid.  Storage is
/// channel-major: values[c * size + p].
class GridField {
 public:
  GridField() = default;
  GridField(AnisoGrid grid, int channels, double fill = 0.0);
  GridField(AnisoGrid grid, int channels, std::vector<double> values);

  const AnisoGrid& grid() const { return grid_; }
  int channels() const { return channels_; }
  std::size_t size() const { return grid_.size(); }

  double* channel(int c) { return values_.data() + c * grid_.size(); }
  const double* channel(int c) const { return values_.data() + c * grid_.size(); }
  double& at(std::size_t p, int c = 0) { return values_[c * grid_.size() + p]; }
  double at(std::size_t p, int c = 0) const { return values_[c * grid_.size() + p]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Single-channel copy.
  GridField extract(int c) const;

  double sup_norm() const;
  double min() const;
  double max() const;
  /// Riemann sum of channel c over the box.
  double integral(int c = 0) const;
  /// Grid inner product sum_p f g * cell volume, over all channels.
  double inner(const GridField& o) const;
  bool all_finite() const;

  GridField& operator+=(const GridField& o);
  GridField& operator-=(const GridField& o);
  GridField& operator*=(double s);
  friend GridField operator+(GridField a, const GridField& b) { return a += b; }
  friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
  friend GridField operator*(double s, GridField a) { return a *= s; }

  /// Samples fn(point) into a single-channel field.
  template <class Fn>
  static GridField Sample(const AnisoGrid& grid, Fn&& fn) {
    GridField f(grid, 1);
    for (std::size_t p = 0; p < grid.size(); ++p) f.at(p) = fn(grid.point(p));
    return f;
  }

 private:
  AnisoGrid grid_;
  int channels_ = 0;
  std::vector<double> values_;
};

/// GridFields on the uniform mesh t_i = t0 + i (t1 - t0) / (n - 1).
class TimeField {
 public:
  TimeField() = default;
  TimeField(double t0, double t1, std::vector<GridField> fields);
  /// n_points copies of `fill`.
  static TimeField Constant(double t0, double t1, int n_points, const GridField& fill);

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  int n_points() const { return static_cast<int>(fields_.size()); }
  double dt() const { return n_points() > 1 ? (t1_ - t0_) / (n_points() - 1) : 0.0; }
  double time(int i) const { return t0_ + i * dt(); }
  const GridField& operator[](int i) const { return fields_[i]; }
  GridField& operator[](int i) { return fields_[i]; }
  const AnisoGrid& grid() const { return fields_.front().grid(); }
  int channels() const { return fields_.front().channels(); }
  std::vector<GridField>& fields() { return fields_; }
  const std::vector<GridField>& fields() const { return fields_; }

  /// Linear interpolation in time (clamped to [t0, t1]).
  GridField at_time(double t) const;

 private:
  double t0_ = 0.0;
  double t1_ = 0.0;
  std::vector<GridField> fields_;
};

/// ".gfd" dump: one JSON header line then little-endian f64 data, row-major
/// over (grid points x channels).
void write_gfd(const std::string& path, const GridField& f);
GridField read_gfd(const std::string& path);

}  // namespace kmv
