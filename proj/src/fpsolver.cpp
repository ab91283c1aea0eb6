#include "kmv/fpsolver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "kmv/error.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

namespace kmv {

NonlinearitySpec NonlinearitySpec::Rational(int d, int m) {
  NonlinearitySpec n;
  n.id = "rational";
  n.f = [](double s) { return 1.0 / (1.0 + s * s); };
  n.df = [](double s) { return -2.0 * s / ((1.0 + s * s) * (1.0 + s * s)); };
  n.K = Eigen::MatrixXd::Ones(d, m);
  return n;
}

NonlinearitySpec NonlinearitySpec::Constant(double c, int d, int m) {
  NonlinearitySpec n;
  n.id = "constant";
  n.f = [c](double) { return c; };
  n.df = [](double) { return 0.0; };
  n.K = Eigen::MatrixXd::Ones(d, m);
  return n;
}

NonlinearitySpec NonlinearitySpec::FromId(const std::string& id, int d, int m) {
  if (id == "rational") return Rational(d, m);
  if (id == "constant" || id == "linear") return Constant(1.0, d, m);
  KMV_THROW(kConfigError, "unknown nonlinearity '" + id + "' (expected rational or constant)");
}

void NonlinearitySpec::check(double s_max, int samples) {
  KMV_DEMAND(samples >= 3, "need at least three samples");
  const double h = 2 * s_max / (samples - 1);
  double prev_dF = 0, prev_dFt = 0;
  sup_dF = lip_dF = sup_dFtilde = lip_dFtilde = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double s = -s_max + i * h;
    const double dF = df(s);
    const double dFt = f(s) + s * df(s);
    sup_dF = std::max(sup_dF, std::abs(dF));
    sup_dFtilde = std::max(sup_dFtilde, std::abs(dFt));
    if (i > 0) {
      lip_dF = std::max(lip_dF, std::abs(dF - prev_dF) / h);
      lip_dFtilde = std::max(lip_dFtilde, std::abs(dFt - prev_dFt) / h);
    }
    prev_dF = dF;
    prev_dFt = dFt;
  }
  for (double v : {sup_dF, lip_dF, sup_dFtilde, lip_dFtilde}) {
    if (!std::isfinite(v)) KMV_THROW(kInvalidArgument, "nonlinearity derivative is not bounded");
  }
}

void FPProblem::validate() const {
  if (!(beta > 0 && beta < 0.5)) KMV_THROW(kInvalidArgument, "beta must lie in (0, 1/2)");
  if (!(epsilon > 0 && epsilon < 1 - 2 * beta)) {
    KMV_THROW(kInvalidArgument, "epsilon must lie in (0, 1 - 2 beta)");
  }
  KMV_DEMAND(T > 0, "horizon T must be positive");
  KMV_DEMAND(u0.channels() == 1, "u0 must be scalar");
  KMV_DEMAND(b.n_points() >= 2 && b.grid() == u0.grid(), "drift must live on the u0 grid");
  KMV_DEMAND(u0.all_finite() && b[0].all_finite(), "inputs must be finite");
  if (require_probability) {
    if (u0.min() < 0) KMV_THROW(kInvalidArgument, "u0 must be nonnegative");
    const double mass = u0.integral();
    if (std::abs(mass - 1.0) > 1e-6) {
      KMV_THROW(kInvalidArgument, "u0 must have unit mass (got " + std::to_string(mass) + ")");
    }
  }
}

double rho_norm(const TimeField& w, double rho, double gamma) {
  double m = 0.0;
  for (int i = 0; i < w.n_points(); ++i) {
    m = std::max(m, std::exp(-rho * (w.time(i) - w.t0())) * besov_norm(w[i], gamma));
  }
  return m;
}

double rho_norm_from_blocks(const std::vector<double>& per_time, const TimeField& mesh,
                            double rho) {
  double m = 0.0;
  for (std::size_t i = 0; i < per_time.size(); ++i) {
    m = std::max(m, std::exp(-rho * (mesh.time(static_cast<int>(i)) - mesh.t0())) * per_time[i]);
  }
  return m;
}

GridField fp_rhs(const GridField& w_s, const GridField& Pu0_s, const GridField& b_s,
                 const NonlinearitySpec& nonlin) {
  const AnisoGrid& grid = w_s.grid();
  const int d = grid.blocks().d;
  const int m = b_s.channels();
  KMV_DEMAND(nonlin.K.rows() == d && nonlin.K.cols() == m,
             "nonlinearity shape does not match (d, drift channels)");
  GridField G(grid, d);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double ft = nonlin.Ftilde(w_s.at(p) + Pu0_s.at(p));
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += nonlin.K(c, j) * b_s.at(p, j);
      G.at(p, c) = ft * acc;
    }
  }
  return divergence_v(G);
}

namespace {

TimeField on_mesh(const TimeField& f, double T, int n_points) {
  if (f.n_points() == n_points && f.t0() == 0.0 && f.t1() == T) return f;
  std::vector<GridField> out;
  for (int i = 0; i < n_points; ++i) out.push_back(f.at_time(T * i / (n_points - 1)));
  return TimeField(0.0, T, std::move(out));
}

bool is_zero(const TimeField& f) {
  for (const auto& g : f.fields()) {
    if (g.sup_norm() != 0.0) return false;
  }
  return true;
}

}  // namespace

FPSolver::FPSolver(FPProblem problem, NonlinearitySpec nonlin, SolverConfig cfg,
                   std::shared_ptr<const Duhamel> shared)
    : problem_(std::move(problem)), nonlin_(std::move(nonlin)), cfg_(cfg) {
  problem_.validate();
  KMV_DEMAND(cfg_.n_t >= 1, "n_t must be >= 1");
  KMV_DEMAND(cfg_.picard_tol > 0, "picard_tol must be positive");
  KMV_DEMAND(cfg_.rho >= 0, "rho must be nonnegative");
  if (!(problem_.kappa() < 1.0)) {
    KMV_THROW(kQuadratureError, "kappa = beta + (eps+1)/2 = " + std::to_string(problem_.kappa()) +
                                    " >= 1");
  }
  const int n = cfg_.n_t + 1;
  problem_.b = on_mesh(problem_.b, problem_.T, n);
  std::vector<GridField> free(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    free[i] = apply_Pprime(problem_.model, problem_.T * i / cfg_.n_t, problem_.u0, Exec::kSerial);
  }
  free_ = TimeField(0.0, problem_.T, std::move(free));
  DuhamelOptions opt;
  opt.rule = cfg_.rule;
  opt.kappa = problem_.kappa();
  opt.cache_bytes = cfg_.cache_bytes;
  if (is_zero(problem_.b)) return;
  if (shared) {
    const bool same = shared->grid() == problem_.u0.grid() && shared->n_points() == n &&
                      shared->t0() == 0.0 && shared->t1() == problem_.T &&
                      shared->direction() == Direction::kForward &&
                      shared->options().rule == opt.rule &&
                      shared->options().kappa == opt.kappa &&
                      shared->model().B == problem_.model.B;
    KMV_DEMAND(same, "shared quadrature weights belong to a different problem");
    duhamel_ = std::move(shared);
  } else {
    duhamel_ = std::make_shared<Duhamel>(problem_.model, problem_.u0.grid(), 0.0, problem_.T, n,
                                         Direction::kForward, opt);
  }
}

FPSolver::~FPSolver() = default;

GridField FPSolver::rhs(const TimeField& w, int i) const {
  return fp_rhs(w[i], free_[i], problem_.b[i], nonlin_);
}

TimeField FPSolver::J(const TimeField& w) const {
  const int n = free_.n_points();
  KMV_DEMAND(w.n_points() == n, "iterate is not on the solver mesh");
  if (!duhamel_) return TimeField::Constant(0.0, problem_.T, n, GridField(w.grid(), 1));
  std::vector<GridField> data(n);
  for (int i = 0; i < n; ++i) data[i] = rhs(w, i);
  std::vector<GridField> out = duhamel_->integrate(data, cfg_.exec);
  for (auto& g : out) g *= -1.0;
  out[0] = GridField(w.grid(), 1);
  return TimeField(0.0, problem_.T, std::move(out));
}

FPSolution FPSolver::solve() const {
  const int n = free_.n_points();
  const double gamma = problem_.beta + problem_.epsilon;
  const double T = problem_.T;
  std::vector<double> rhos{cfg_.rho};
  for (int r = 0; r < cfg_.rho_retries; ++r) rhos.push_back(std::max(2 * rhos.back(), 1.0 / T));

  FPSolution sol;
  TimeField w = TimeField::Constant(0.0, T, n, GridField(problem_.u0.grid(), 1));
  std::vector<std::vector<double>> incs;
  auto contraction_at = [&](double rho) {
    double c = 0.0;
    for (std::size_t k = 1; k < incs.size(); ++k) {
      const double a = rho_norm_from_blocks(incs[k - 1], w, rho);
      const double b = rho_norm_from_blocks(incs[k], w, rho);
      // Skip pairs at the round-off floor.
      if (a > 1e-3 * cfg_.picard_tol && b > 0) c = std::max(c, b / a);
    }
    return c;
  };
  bool converged = false;
  std::size_t rung = 0;
  for (int it = 0; it < cfg_.max_iters; ++it) {
    const auto start = std::chrono::steady_clock::now();
    TimeField next = J(w);
    std::vector<double> per_time(n);
    for (int i = 0; i < n; ++i) per_time[i] = besov_norm(next[i] - w[i], gamma, cfg_.exec);
    w = std::move(next);
    incs.push_back(per_time);
    IterationRecord rec;
    rec.iteration = it + 1;
    rec.per_time = per_time;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    sol.history.push_back(std::move(rec));
    // Smallest rung at which both the increment and the contraction estimate pass.
    for (rung = 0; rung < rhos.size(); ++rung) {
      const double inc = rho_norm_from_blocks(per_time, w, rhos[rung]);
      if (inc < cfg_.picard_tol && contraction_at(rhos[rung]) <= cfg_.contraction_target) break;
    }
    if (rung < rhos.size()) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    const double inc = rho_norm_from_blocks(incs.back(), w, rhos.back());
    KMV_THROW(kNoConvergence, "Picard increment " + std::to_string(inc) + " after " +
                                  std::to_string(cfg_.max_iters) + " iterations (rho up to " +
                                  std::to_string(rhos.back()) + ")");
  }
  sol.rho = rhos[rung];
  sol.contraction = contraction_at(sol.rho);
  for (auto& rec : sol.history) rec.increment = rho_norm_from_blocks(rec.per_time, w, sol.rho);
  sol.iterations = static_cast<int>(sol.history.size());
  std::vector<GridField> u(n);
  for (int i = 0; i < n; ++i) u[i] = w[i] + free_[i];
  sol.u = TimeField(0.0, T, std::move(u));
  sol.w = std::move(w);
  for (int i = 0; i + 1 < n; ++i) {
    sol.continuity_modulus =
        std::max(sol.continuity_modulus, (sol.u[i + 1] - sol.u[i]).sup_norm());
  }
  return sol;
}

GridField fp_rhs(const TimeField& w, const FPProblem& problem, const NonlinearitySpec& nonlin,
                 int i) {
  const GridField Pu0 = apply_Pprime(problem.model, w.time(i), problem.u0);
  return fp_rhs(w[i], Pu0, problem.b.at_time(w.time(i)), nonlin);
}

TimeField picard_J(const TimeField& w, const FPProblem& problem, const NonlinearitySpec& nonlin,
                   const SolverConfig& cfg) {
  SolverConfig c = cfg;
  c.n_t = w.n_points() - 1;
  return FPSolver(problem, nonlin, c).J(w);
}

FPSolution solve_fp(const FPProblem& problem, const NonlinearitySpec& nonlin,
                    const SolverConfig& cfg) {
  return FPSolver(problem, nonlin, cfg).solve();
}

ConservationReport conservation_report(const TimeField& u, double expected_mass, double delta) {
  ConservationReport r;
  r.global_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < u.n_points(); ++i) {
    const GridField& f = u[i];
    double neg = 0.0, abs = 0.0;
    for (double v : f.values()) {
      abs += std::abs(v);
      if (v < 0) neg -= v;
    }
    r.times.push_back(u.time(i));
    r.mass.push_back(f.integral());
    r.min_value.push_back(f.min());
    r.negative_fraction.push_back(abs > 0 ? neg / abs : 0.0);
    r.max_mass_deviation = std::max(r.max_mass_deviation, std::abs(r.mass.back() - expected_mass));
    r.global_min = std::min(r.global_min, r.min_value.back());
  }
  r.ok = r.max_mass_deviation <= delta * std::abs(expected_mass) && r.global_min >= -delta;
  return r;
}

void write_conservation_csv(const std::string& path, const ConservationReport& r) {
  std::ofstream os(path);
  if (!os) KMV_THROW(kIoError, "cannot write " + path);
  os.precision(17);
  os << "t,mass,min,negative_fraction\n";
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    os << r.times[i] << ',' << r.mass[i] << ',' << r.min_value[i] << ','
       << r.negative_fraction[i] << '\n';
  }
}

GridField bump_test_function(const AnisoGrid& grid, const Eigen::VectorXd& center,
                             const Eigen::VectorXd& radius) {
  return GridField::Sample(grid, [&](const Eigen::VectorXd& z) {
    double v = 1.0;
    for (int k = 0; k < z.size(); ++k) {
      const double s = (z(k) - center(k)) / radius(k);
      v *= std::abs(s) < 1 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0;
    }
    return v;
  });
}

double weak_form_residual(const TimeField& u, const FPProblem& problem,
                          const NonlinearitySpec& nonlin, const GridField& phi) {
  const AnisoGrid& grid = phi.grid();
  const int d = grid.blocks().d;
  const GridField Aphi = generator_apply(problem.model, phi);
  const GridField grad = gradient_v(phi);
  const double vol = grid.cell_volume();
  auto integrand = [&](int i) {
    const double t = u.time(i);
    const GridField& us = u[i];
    const GridField bs = problem.b.at_time(t);
    double acc = us.inner(Aphi);
    double flux = 0.0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double ft = nonlin.Ftilde(us.at(p));
      for (int c = 0; c < d; ++c) {
        double bc = 0.0;
        for (int j = 0; j < bs.channels(); ++j) bc += nonlin.K(c, j) * bs.at(p, j);
        flux += ft * bc * grad.at(p, c);
      }
    }
    return acc + flux * vol;
  };
  const double base = problem.u0.inner(phi);
  double integral = 0.0, worst = 0.0;
  double prev = integrand(0);
  for (int i = 1; i < u.n_points(); ++i) {
    const double cur = integrand(i);
    integral += 0.5 * (prev + cur) * (u.time(i) - u.time(i - 1));
    prev = cur;
    worst = std::max(worst, std::abs(u[i].inner(phi) - base - integral));
  }
  return worst;
}

}  // namespace kmv
