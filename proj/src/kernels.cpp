#include "kmv/kernels.hpp"

#include <cmath>

#include "kmv/error.hpp"
#include "kmv/fft.hpp"

namespace kmv {

namespace {

constexpr double kPi = 3.141592653589793;

// Periodic trigonometric interpolation kernel for an even number n of nodes
// with the Nyquist mode treated as a cosine; theta = pi * u / L.
double dirichlet(int n, double theta) {
  const double h = 0.5 * theta;
  const double s = std::sin(h);
  // theta a multiple of 2 pi: the limit is (-1)^{n k} = 1 for even n.
  if (std::abs(s) < 1e-13) return 1.0;
  return std::sin(n * h) * std::cos(h) / (s * n);
}

struct LineGeometry {
  int n = 0;
  std::size_t stride = 1;
  std::size_t outer = 1;
  std::size_t inner = 1;
};

LineGeometry geometry(const AnisoGrid& g, int axis) {
  LineGeometry out;
  out.n = g.points(axis);
  out.stride = g.stride(axis);
  out.inner = g.stride(axis);
  out.outer = g.size() / (out.inner * out.n);
  return out;
}

struct Scratch {
  std::vector<double> line;
  std::vector<double> res;
  std::vector<cplx> spec;
};

}  // namespace

Warp::Warp(const AnisoGrid& grid, const Eigen::MatrixXd& L) : grid_(grid) {
  const int N = grid.dim();
  KMV_DEMAND(L.rows() == N && L.cols() == N, "warp matrix has wrong size");
  // Doolittle LU without pivoting: L = Lo * Up, Lo unit lower.
  Eigen::MatrixXd Lo = Eigen::MatrixXd::Identity(N, N);
  Eigen::MatrixXd Up = Eigen::MatrixXd::Zero(N, N);
  const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
  for (int i = 0; i < N; ++i) {
    for (int j = i; j < N; ++j) {
      double s = L(i, j);
      for (int k = 0; k < i; ++k) s -= Lo(i, k) * Up(k, j);
      Up(i, j) = s;
    }
    if (std::abs(Up(i, i)) < 1e-12 * scale) {
      KMV_THROW(kInvalidArgument, "warp matrix needs nonzero leading minors");
    }
    for (int j = i + 1; j < N; ++j) {
      double s = L(j, i);
      for (int k = 0; k < i; ++k) s -= Lo(j, k) * Up(k, i);
      Lo(j, i) = s / Up(i, i);
    }
  }
  auto add = [&](int axis, const Eigen::RowVectorXd& row) {
    LineOp op;
    op.axis = axis;
    op.scale = row(axis);
    op.coeff.assign(N, 0.0);
    bool trivial = std::abs(op.scale - 1.0) < 1e-15;
    for (int j = 0; j < N; ++j) {
      if (j == axis) continue;
      op.coeff[j] = row(j);
      if (row(j) != 0.0) trivial = false;
    }
    if (!trivial) ops_.push_back(std::move(op));
  };
  // g o Lo = g o F_1 o F_2 ... ; g o Up = g o G_{N-1} o ... o G_0.
  for (int k = 1; k < N; ++k) add(k, Lo.row(k));
  for (int k = N - 1; k >= 0; --k) add(k, Up.row(k));
}

void Warp::run_op(const LineOp& op, bool adjoint, double* data, Exec exec) const {
  const LineGeometry geo = geometry(grid_, op.axis);
  const int n = geo.n;
  const int N = grid_.dim();
  const double L = grid_.half_extent(op.axis);
  const bool pure_shift = std::abs(op.scale - 1.0) < 1e-15;
  const long long lines = static_cast<long long>(geo.outer * geo.inner);

  auto do_line = [&](long long line, Scratch& sc) {
    const std::size_t o = static_cast<std::size_t>(line) / geo.inner;
    const std::size_t i = static_cast<std::size_t>(line) % geo.inner;
    const std::size_t base = o * geo.inner * n + i;
    // Coordinates of the other axes of this line.
    double shift = 0.0;
    const std::size_t p0 = base;
    for (int j = 0; j < N; ++j) {
      if (j == op.axis || op.coeff[j] == 0.0) continue;
      const int ij = static_cast<int>((p0 / grid_.stride(j)) % grid_.points(j));
      shift += op.coeff[j] * grid_.coord(j, ij);
    }
    for (int m = 0; m < n; ++m) sc.line[m] = data[base + m * geo.stride];
    if (pure_shift) {
      const double a = adjoint ? -shift : shift;
      fft_line_forward(n, sc.line.data(), sc.spec.data());
      for (int q = 0; q < n / 2; ++q) {
        const double ph = kPi / L * q * a;
        sc.spec[q] *= cplx(std::cos(ph), std::sin(ph));
      }
      sc.spec[n / 2] *= std::cos(kPi / L * (n / 2) * a);
      fft_line_inverse(n, sc.spec.data(), sc.res.data());
    } else {
      // Resample at y_m = scale * x_m + shift (trig interpolation), or apply
      // the transposed interpolation matrix for the adjoint.
      for (int m = 0; m < n; ++m) sc.res[m] = 0.0;
      for (int m = 0; m < n; ++m) {
        const double y = op.scale * grid_.coord(op.axis, m) + shift;
        for (int q = 0; q < n; ++q) {
          const double u = y - grid_.coord(op.axis, q);
          const double w = dirichlet(n, kPi * u / L);
          if (!adjoint) {
            sc.res[m] += w * sc.line[q];
          } else {
            sc.res[q] += w * sc.line[m];
          }
        }
      }
    }
    for (int m = 0; m < n; ++m) data[base + m * geo.stride] = sc.res[m];
  };

  auto make_scratch = [&]() {
    Scratch sc;
    sc.line.resize(n);
    sc.res.resize(n);
    sc.spec.resize(n / 2 + 1);
    return sc;
  };

  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      Scratch sc = make_scratch();
#pragma omp for schedule(static)
      for (long long line = 0; line < lines; ++line) do_line(line, sc);
    }
  } else {
    Scratch sc = make_scratch();
    for (long long line = 0; line < lines; ++line) do_line(line, sc);
  }
}

void Warp::apply(const double* in, double* out, Exec exec) const {
  if (in != out) std::copy(in, in + grid_.size(), out);
  for (const auto& op : ops_) run_op(op, false, out, exec);
}

void Warp::apply_adjoint(const double* in, double* out, Exec exec) const {
  if (in != out) std::copy(in, in + grid_.size(), out);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) run_op(*it, true, out, exec);
}

GridField Warp::apply(const GridField& f, Exec exec) const {
  GridField out = f;
  for (int c = 0; c < f.channels(); ++c) apply(out.channel(c), out.channel(c), exec);
  return out;
}

GridField Warp::apply_adjoint(const GridField& f, Exec exec) const {
  GridField out = f;
  for (int c = 0; c < f.channels(); ++c) apply_adjoint(out.channel(c), out.channel(c), exec);
  return out;
}

}  // namespace kmv
