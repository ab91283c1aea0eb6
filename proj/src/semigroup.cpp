#include "kmv/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kmv/error.hpp"
#include "kmv/fft.hpp"
#include "kmv/spectral.hpp"

namespace kmv {

namespace {
constexpr double kPi = 3.141592653589793;
}

Eigen::MatrixXd covariance_unchecked(const KolmogorovModel& model, double t) {
  const int N = model.N();
  if (t == 0.0) return Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  M.topLeftCorner(N, N) = -model.B;
  M.topRightCorner(N, N) = model.A;
  M.bottomRightCorner(N, N) = model.B.transpose();
  const Eigen::MatrixXd E = matrix_exp(M, t);
  // E = [[e^{-tB}, e^{-tB} C(t)], [0, e^{tB^T}]].
  const Eigen::MatrixXd C = E.bottomRightCorner(N, N).transpose() * E.topRightCorner(N, N);
  return 0.5 * (C + C.transpose());
}

Eigen::MatrixXd covariance(const KolmogorovModel& model, double t) {
  KMV_DEMAND(t > 0, "covariance needs t > 0");
  Eigen::MatrixXd C = covariance_unchecked(model, t);
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0)) {
    KMV_THROW(kNotHypoelliptic, "C(t) is not positive definite");
  }
  return C;
}

KernelCache KernelCache::Build(const KolmogorovModel& model, const std::vector<double>& times) {
  KernelCache cache;
  cache.model = model;
  const int N = model.N();
  for (double t : times) {
    Entry e;
    e.t = t;
    e.expB = matrix_exp(model.B, t);
    if (t > 0) {
      e.C = covariance(model, t);
      Eigen::LLT<Eigen::MatrixXd> llt(e.C);
      e.C_inv = llt.solve(Eigen::MatrixXd::Identity(N, N));
      const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      e.det_C = std::exp(logdet);
      e.log_normalizer = -0.5 * N * std::log(2 * kPi) - 0.5 * logdet;
    } else {
      e.C = Eigen::MatrixXd::Zero(N, N);
    }
    cache.entries.push_back(std::move(e));
  }
  return cache;
}

double gamma_density(const KolmogorovModel& model, double t, const Eigen::VectorXd& z) {
  const Eigen::MatrixXd C = covariance(model, t);
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double q = z.dot(llt.solve(z));
  return std::exp(-0.5 * model.N() * std::log(2 * kPi) - 0.5 * logdet - 0.5 * q);
}

std::vector<double> gaussian_multiplier(const AnisoGrid& grid, const Eigen::MatrixXd& C) {
  const int N = grid.dim();
  std::vector<double> m(grid.spectral_size());
  std::vector<const std::vector<double>*> xi(N);
  for (int k = 0; k < N; ++k) xi[k] = &grid.spectral_freq(k);
  for (std::size_t s = 0; s < m.size(); ++s) {
    double q = 0.0;
    for (int a = 0; a < N; ++a) {
      const double xa = (*xi[a])[s];
      q += C(a, a) * xa * xa;
      for (int b = a + 1; b < N; ++b) q += 2.0 * C(a, b) * xa * (*xi[b])[s];
    }
    m[s] = std::exp(-0.5 * q);
  }
  return m;
}

GridField gaussian_on_grid(const AnisoGrid& grid, const Eigen::MatrixXd& C) {
  const std::vector<double> m = gaussian_multiplier(grid, C);
  Spectrum s(m.size());
  const double scale = 1.0 / grid.cell_volume();
  // Shift the peak from index 0 (z = -L) to the origin: e^{i xi.L} = (-1)^{sum m_k}.
  for (std::size_t i = 0; i < m.size(); ++i) {
    long long parity = 0;
    for (int k = 0; k < grid.dim(); ++k)
      parity += std::llround(grid.spectral_freq(k)[i] * grid.half_extent(k) / 3.141592653589793);
    s[i] = (parity % 2 == 0 ? 1.0 : -1.0) * m[i] * scale;
  }
  GridField out(grid, 1);
  fft_inverse(grid, s.data(), out.channel(0));
  return out;
}

bool is_resolved(const AnisoGrid& grid, const Eigen::MatrixXd& C) {
  for (int k = 0; k < grid.dim(); ++k) {
    if (std::sqrt(std::max(C(k, k), 0.0)) < grid.spacing(k)) return false;
  }
  return true;
}

namespace {

void convolve_in_place(const AnisoGrid& grid, const std::vector<double>& mult, double* v) {
  Spectrum s = fft_forward(grid, v);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= mult[i];
  fft_inverse(grid, s.data(), v);
}

}  // namespace

AnisoGrid shear_padded_grid(const KolmogorovModel& model, const AnisoGrid& grid, double t_abs) {
  const int N = grid.dim();
  KMV_DEMAND(model.N() == N, "model and grid dimensions differ");
  // Entrywise sup of |e^{s B^T}| over |s| <= t_abs.
  Eigen::MatrixXd bound = Eigen::MatrixXd::Identity(N, N);
  constexpr int kSamples = 32;
  for (int q = 0; q <= kSamples; ++q) {
    const double s = t_abs * (2.0 * q / kSamples - 1.0);
    bound = bound.cwiseMax(matrix_exp(model.B.transpose(), s).cwiseAbs());
  }
  std::vector<int> pts(N);
  for (int k = 0; k < N; ++k) {
    double reach = 0.0;
    for (int l = 0; l < N; ++l) reach += bound(k, l) * grid.nyquist(l);
    const int factor = std::max(1, static_cast<int>(std::ceil(reach / grid.nyquist(k) - 1e-9)));
    pts[k] = grid.points(k) * factor;
  }
  return AnisoGrid(grid.blocks(), grid.half_extents(), pts);
}

GridField apply_P(const KolmogorovModel& model, double t, const GridField& f, Exec exec) {
  KMV_DEMAND(t >= 0, "semigroup time must be nonnegative");
  if (t == 0.0) return f;
  const AnisoGrid& grid = f.grid();
  const auto mult = gaussian_multiplier(grid, covariance(model, t));
  const Warp warp(grid, matrix_exp(model.B, t));
  GridField out = f;
  for (int c = 0; c < f.channels(); ++c) {
    convolve_in_place(grid, mult, out.channel(c));
    warp.apply(out.channel(c), out.channel(c), exec);
  }
  return out;
}

GridField apply_Pprime(const KolmogorovModel& model, double t, const GridField& f, Exec exec) {
  KMV_DEMAND(t >= 0, "semigroup time must be nonnegative");
  if (t == 0.0) return f;
  const AnisoGrid& grid = f.grid();
  const auto mult = gaussian_multiplier(grid, covariance(model, t));
  const Warp warp(grid, matrix_exp(model.B, t));
  GridField out = f;
  for (int c = 0; c < f.channels(); ++c) {
    warp.apply_adjoint(out.channel(c), out.channel(c), exec);
    convolve_in_place(grid, mult, out.channel(c));
  }
  return out;
}

GridField generator_apply(const KolmogorovModel& model, const GridField& psi) {
  const AnisoGrid& grid = psi.grid();
  const int N = grid.dim();
  GridField out = 0.5 * laplacian_v(psi);
  std::vector<GridField> grad;
  for (int k = 0; k < N; ++k) grad.push_back(spectral_derivative(psi, k));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Eigen::VectorXd z = grid.point(p);
    const Eigen::VectorXd bz = model.B * z;
    for (int c = 0; c < psi.channels(); ++c) {
      double acc = 0.0;
      for (int k = 0; k < N; ++k) acc += bz(k) * grad[k].at(p, c);
      out.at(p, c) += acc;
    }
  }
  return out;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  KMV_DEMAND(x.size() == y.size() && x.size() >= 2, "slope fit needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

SchauderReport schauder_probe(const KolmogorovModel& model, double gamma, double alpha,
                              std::vector<double> t_list,
                              const std::vector<GridField>& samples) {
  KMV_DEMAND(!samples.empty(), "schauder_probe needs sample fields");
  std::sort(t_list.begin(), t_list.end());
  SchauderReport rep;
  rep.t_list = t_list;
  std::vector<double> norm_in(samples.size());
  for (std::size_t f = 0; f < samples.size(); ++f) norm_in[f] = besov_norm(samples[f], gamma);
  std::vector<double> max_P(t_list.size(), 0.0), max_ratio_t(t_list.size(), 0.0);
  rep.max_norm_out.assign(t_list.size(), 0.0);
  for (std::size_t i = 0; i < t_list.size(); ++i) {
    const double t = t_list[i];
    KMV_DEMAND(t > 0, "probe times must be positive");
    for (std::size_t f = 0; f < samples.size(); ++f) {
      SchauderRow row;
      row.gamma = gamma;
      row.alpha = alpha;
      row.t = t;
      row.field_id = static_cast<int>(f);
      row.norm_in = norm_in[f];
      row.norm_out = besov_norm(apply_Pprime(model, t, samples[f]), gamma + alpha);
      row.norm_out_P = besov_norm(apply_P(model, t, samples[f]), gamma + alpha);
      const double w = std::pow(t, 0.5 * alpha);
      row.ratio = norm_in[f] > 0 ? row.norm_out * w / norm_in[f] : 0.0;
      row.ratio_P = norm_in[f] > 0 ? row.norm_out_P * w / norm_in[f] : 0.0;
      rep.max_norm_out[i] = std::max(rep.max_norm_out[i], row.norm_out);
      max_P[i] = std::max(max_P[i], row.norm_out_P);
      max_ratio_t[i] = std::max(max_ratio_t[i], row.ratio);
      rep.max_ratio = std::max(rep.max_ratio, row.ratio);
      rep.rows.push_back(row);
    }
  }
  if (t_list.size() >= 2) {
    std::vector<double> lt, ln, lp;
    for (std::size_t i = 0; i < t_list.size(); ++i) {
      lt.push_back(std::log(t_list[i]));
      ln.push_back(std::log(rep.max_norm_out[i]));
      lp.push_back(std::log(max_P[i]));
    }
    rep.slope = fit_slope(lt, ln);
    rep.slope_P = fit_slope(lt, lp);
  }
  double run = 0.0, first = 0.0;
  for (std::size_t i = 0; i < max_ratio_t.size(); ++i) {
    run = std::max(run, max_ratio_t[i]);
    if (i == 0) first = run;
  }
  rep.running_max_spread = first > 0 ? run / first : 0.0;
  return rep;
}

void write_schauder_csv(const std::string& path, const SchauderReport& report) {
  std::ofstream os(path);
  if (!os) KMV_THROW(kIoError, "cannot write " + path);
  os.precision(17);
  os << "gamma,alpha,t,field_id,ratio,norm_in,norm_out,ratio_P,norm_out_P,slope\n";
  for (const auto& r : report.rows) {
    os << r.gamma << ',' << r.alpha << ',' << r.t << ',' << r.field_id << ',' << r.ratio << ','
       << r.norm_in << ',' << r.norm_out << ',' << r.ratio_P << ',' << r.norm_out_P << ','
       << report.slope << '\n';
  }
}

BlockDecayReport kernel_block_decay(const KolmogorovModel& model, const AnisoGrid& grid,
                                    const std::vector<double>& t_list,
                                    const std::vector<int>& j_list, double fit_lo,
                                    double fit_hi) {
  auto part = build_partition(grid);
  BlockDecayReport rep;
  rep.fit_lo = fit_lo;
  rep.fit_hi = fit_hi;
  std::vector<double> lx, ly;
  std::vector<double> buf(grid.size());
  for (double t : t_list) {
    const auto m = gaussian_multiplier(grid, covariance(model, t));
    for (int j : j_list) {
      KMV_DEMAND(j >= -1 && j <= part->J_max(), "block index beyond J_max");
      Spectrum s(m.size());
      const auto& rho = part->row(j);
      for (std::size_t i = 0; i < m.size(); ++i) s[i] = m[i] * rho[i] / grid.cell_volume();
      fft_inverse(grid, s.data(), buf.data());
      double l1 = 0.0;
      for (double v : buf) l1 += std::abs(v);
      l1 *= grid.cell_volume();
      rep.rows.push_back({t, j, l1});
      const double x = t * std::ldexp(1.0, 2 * j);
      if (x >= fit_lo * (1 - 1e-12) && x <= fit_hi * (1 + 1e-12) && l1 > 0) {
        lx.push_back(std::log(x));
        ly.push_back(std::log(l1));
      }
    }
  }
  rep.fit_points = static_cast<int>(lx.size());
  if (lx.size() >= 2) rep.slope = fit_slope(lx, ly);
  return rep;
}

void write_block_decay_csv(const std::string& path, const BlockDecayReport& report) {
  std::ofstream os(path);
  if (!os) KMV_THROW(kIoError, "cannot write " + path);
  os.precision(17);
  os << "t,j,l1_norm\n";
  for (const auto& r : report.rows) os << r.t << ',' << r.j << ',' << r.l1_norm << '\n';
}

}  // namespace kmv
