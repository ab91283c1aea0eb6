#include "kmv/kolmogorov.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kmv/error.hpp"
#include "kmv/kernels.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

namespace kmv {

namespace {

TimeField on_mesh(const TimeField& f, double T, int n_points) {
  if (f.n_points() == n_points && f.t0() == 0.0 && f.t1() == T) return f;
  std::vector<GridField> out;
  for (int i = 0; i < n_points; ++i) out.push_back(f.at_time(T * i / (n_points - 1)));
  return TimeField(0.0, T, std::move(out));
}

bool channel_is_zero(const TimeField& f, int c) {
  for (const auto& g : f.fields()) {
    const double* v = g.channel(c);
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (v[p] != 0.0) return false;
    }
  }
  return true;
}

bool is_zero(const GridField& f) { return f.sup_norm() == 0.0; }

// <Bc, grad_v> f for a scalar field f.
GridField transport_v(const GridField& Bc, const GridField& f) {
  const GridField grad = gradient_v(f);
  GridField out(f.grid(), 1);
  for (std::size_t p = 0; p < f.size(); ++p) {
    double acc = 0.0;
    for (int k = 0; k < Bc.channels(); ++k) acc += Bc.at(p, k) * grad.at(p, k);
    out.at(p) = acc;
  }
  return out;
}

}  // namespace

void BackwardProblem::validate() const {
  if (!(beta > 0 && beta < 0.5)) KMV_THROW(kInvalidArgument, "beta must lie in (0, 1/2)");
  if (!(epsilon > 0 && epsilon < 1 - 2 * beta)) {
    KMV_THROW(kInvalidArgument, "epsilon must lie in (0, 1 - 2 beta)");
  }
  KMV_DEMAND(T > 0, "horizon T must be positive");
  KMV_DEMAND(lambda >= 0, "lambda must be nonnegative");
  KMV_DEMAND(Bc.n_points() >= 1 && Bc.channels() == model.d(), "Bc must have d channels");
  KMV_DEMAND(g.n_points() >= 1 && g.channels() == ell.channels(),
             "g and ell must have the same channel count");
  KMV_DEMAND(Bc.grid() == ell.grid() && g.grid() == ell.grid(), "inputs on different grids");
}

BackwardProblem BackwardProblem::Zvonkin(const KolmogorovModel& model, const TimeField& Bc,
                                         double lambda, double beta, double epsilon, double T) {
  BackwardProblem p;
  p.model = model;
  p.Bc = Bc;
  const int N = model.N();
  const int d = model.d();
  std::vector<GridField> g;
  for (const auto& b : Bc.fields()) {
    GridField gi(b.grid(), N);
    for (int c = 0; c < d; ++c) {
      std::transform(b.channel(c), b.channel(c) + b.size(), gi.channel(c),
                     [](double v) { return -v; });
    }
    g.push_back(std::move(gi));
  }
  p.g = TimeField(Bc.t0(), Bc.t1(), std::move(g));
  p.ell = GridField(Bc.grid(), N);
  p.lambda = lambda;
  p.beta = beta;
  p.epsilon = epsilon;
  p.T = T;
  return p;
}

BackwardSolution solve_kolmogorov(const BackwardProblem& problem_in, const SolverConfig& cfg) {
  problem_in.validate();
  if (!(problem_in.kappa() < 1.0)) {
    KMV_THROW(kQuadratureError, "kappa = beta + (eps+1)/2 >= 1");
  }
  const double T = problem_in.T;
  const int n = cfg.n_t + 1;
  const TimeField Bc = on_mesh(problem_in.Bc, T, n);
  const TimeField g = on_mesh(problem_in.g, T, n);
  const GridField& ell = problem_in.ell;
  const AnisoGrid& grid = ell.grid();
  const int q = ell.channels();
  const double gamma = 1.0 + problem_in.beta + problem_in.epsilon;
  const double lambda = problem_in.lambda;
  bool drift_zero = true;
  for (int c = 0; c < Bc.channels(); ++c) drift_zero = drift_zero && channel_is_zero(Bc, c);

  DuhamelOptions opt;
  opt.rule = cfg.rule;
  opt.kappa = problem_in.kappa();
  opt.lambda = lambda;
  opt.cache_bytes = cfg.cache_bytes;
  std::unique_ptr<Duhamel> duhamel;
  auto get_duhamel = [&]() -> const Duhamel& {
    if (!duhamel) {
      duhamel = std::make_unique<Duhamel>(problem_in.model, grid, 0.0, T, n, Direction::kBackward,
                                          opt);
    }
    return *duhamel;
  };

  // base_c = e^{-lambda (T-t)} P_{T-t} ell_c - int e^{-lambda(s-t)} P_{s-t} g_c ds.
  std::vector<std::vector<GridField>> base(q, std::vector<GridField>(n, GridField(grid, 1)));
  std::vector<bool> active(q, false);
  for (int c = 0; c < q; ++c) {
    const GridField ell_c = ell.extract(c);
    const bool g_zero = channel_is_zero(g, c);
    if (g_zero && is_zero(ell_c)) continue;
    active[c] = true;
    if (!is_zero(ell_c)) {
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < n; ++i) {
        const double tau = T - T * i / (n - 1);
        base[c][i] = std::exp(-lambda * tau) * apply_P(problem_in.model, tau, ell_c, Exec::kSerial);
      }
    }
    if (!g_zero) {
      std::vector<GridField> data(n);
      for (int i = 0; i < n; ++i) data[i] = g[i].extract(c);
      const auto Dg = get_duhamel().integrate(data, cfg.exec);
      for (int i = 0; i < n; ++i) base[c][i] -= Dg[i];
    }
  }

  BackwardSolution sol;
  std::vector<std::vector<GridField>> u = base;
  if (!drift_zero) {
    std::vector<double> rhos{cfg.rho};
    for (int r = 0; r < cfg.rho_retries; ++r) rhos.push_back(std::max(2 * rhos.back(), 1.0 / T));
    auto weighted = [&](const std::vector<double>& per_time, double rho) {
      double m = 0.0;
      for (int i = 0; i < n; ++i) {
        m = std::max(m, std::exp(-rho * (T - T * i / (n - 1))) * per_time[i]);
      }
      return m;
    };
    std::vector<std::vector<double>> incs;
    auto contraction_at = [&](double rho) {
      double cmax = 0.0;
      for (std::size_t k = 1; k < incs.size(); ++k) {
        const double a = weighted(incs[k - 1], rho);
        const double b = weighted(incs[k], rho);
        if (a > 1e-3 * cfg.picard_tol && b > 0) cmax = std::max(cmax, b / a);
      }
      return cmax;
    };
    bool converged = false;
    std::size_t rung = 0;
    for (int it = 0; it < cfg.max_iters && !converged; ++it) {
      std::vector<double> per_time(n, 0.0);
      for (int c = 0; c < q; ++c) {
        if (!active[c]) continue;
        std::vector<GridField> data(n);
        for (int i = 0; i < n; ++i) data[i] = transport_v(Bc[i], u[c][i]);
        const auto D = get_duhamel().integrate(data, cfg.exec);
        for (int i = 0; i < n; ++i) {
          GridField next = base[c][i] + D[i];
          per_time[i] = std::max(per_time[i], besov_norm(next - u[c][i], gamma, cfg.exec));
          u[c][i] = std::move(next);
        }
      }
      incs.push_back(per_time);
      for (rung = 0; rung < rhos.size(); ++rung) {
        if (weighted(per_time, rhos[rung]) < cfg.picard_tol &&
            contraction_at(rhos[rung]) <= cfg.contraction_target) {
          converged = true;
          break;
        }
      }
    }
    if (!converged) {
      KMV_THROW(kNoConvergence, "backward Picard iteration did not reach " +
                                    std::to_string(cfg.picard_tol) + " in " +
                                    std::to_string(cfg.max_iters) + " iterations");
    }
    sol.rho = rhos[rung];
    sol.contraction = contraction_at(sol.rho);
    sol.iterations = static_cast<int>(incs.size());
    for (const auto& pt : incs) sol.increments.push_back(weighted(pt, sol.rho));
  } else {
    sol.iterations = 1;
  }
  std::vector<GridField> out(n, GridField(grid, q));
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < q; ++c) {
      std::copy(u[c][i].channel(0), u[c][i].channel(0) + grid.size(), out[i].channel(c));
    }
  }
  sol.u = TimeField(0.0, T, std::move(out));
  return sol;
}

double kolmogorov_residual(const TimeField& u, const BackwardProblem& problem, double window) {
  const AnisoGrid& grid = u.grid();
  const int n = u.n_points();
  const TimeField Bc = on_mesh(problem.Bc, u.t1(), n);
  const TimeField g = on_mesh(problem.g, u.t1(), n);
  const double h = u.dt();
  const Warp flow(grid, matrix_exp(problem.model.B, h));
  std::vector<unsigned char> inside(grid.size(), 1);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Eigen::VectorXd z = grid.point(p);
    for (int k = 0; k < grid.dim(); ++k) {
      if (std::abs(z(k)) > window * grid.half_extent(k)) inside[p] = 0;
    }
  }
  double worst = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    for (int c = 0; c < u.channels(); ++c) {
      const GridField ui = u[i].extract(c);
      GridField r = flow.apply(u[i + 1].extract(c));
      r -= ui;
      r *= 1.0 / h;
      r += 0.5 * laplacian_v(ui);
      r += transport_v(Bc[i], ui);
      for (std::size_t p = 0; p < grid.size(); ++p) {
        r.at(p) -= problem.lambda * ui.at(p) + g[i].at(p, c);
        if (inside[p]) worst = std::max(worst, std::abs(r.at(p)));
      }
    }
  }
  return worst;
}

LambdaSearchResult lambda_bar_search(const BackwardProblem& problem, const SolverConfig& cfg,
                                     double bound, double max_lambda, bool full_ladder) {
  KMV_DEMAND(is_zero(problem.ell), "lambda_bar_search needs ell = 0");
  const double gamma = 1.0 + problem.beta + problem.epsilon;
  LambdaSearchResult res;
  bool found = false;
  for (double lambda = 1.0; lambda <= max_lambda; lambda *= 2.0) {
    BackwardProblem p = problem;
    p.lambda = lambda;
    BackwardSolution sol = solve_kolmogorov(p, cfg);
    double achieved = 0.0;
    for (const auto& f : sol.u.fields()) achieved = std::max(achieved, besov_norm(f, gamma));
    res.ladder.push_back({lambda, achieved});
    if (!found && achieved <= bound) {
      found = true;
      res.lambda = lambda;
      res.achieved_norm = achieved;
      res.solution = std::move(sol);
      if (!full_ladder) break;
    }
  }
  if (!found) {
    KMV_THROW(kLadderExhausted, "sup_t ||u_t|| stayed above " + std::to_string(bound) +
                                    " up to lambda = " + std::to_string(max_lambda));
  }
  return res;
}

void write_ladder_csv(const std::string& path, const std::vector<LadderRung>& ladder) {
  std::ofstream os(path);
  if (!os) KMV_THROW(kIoError, "cannot write " + path);
  os.precision(17);
  os << "lambda,achieved_norm\n";
  for (const auto& r : ladder) os << r.lambda << ',' << r.achieved_norm << '\n';
}

ZvonkinMaps::ZvonkinMaps(TimeField u, double beta, double epsilon) : u_(std::move(u)) {
  const AnisoGrid& grid = u_.grid();
  const int N = grid.dim();
  d_ = grid.blocks().d;
  KMV_DEMAND(u_.channels() == N, "Zvonkin u must have N channels");
  for (const auto& f : u_.fields()) {
    for (int c = d_; c < N; ++c) {
      const double* v = f.channel(c);
      for (std::size_t p = 0; p < f.size(); ++p) {
        KMV_DEMAND(v[p] == 0.0, "trailing Zvonkin components must vanish");
      }
    }
    GridField head(grid, d_);
    for (int c = 0; c < d_; ++c) std::copy(f.channel(c), f.channel(c) + f.size(), head.channel(c));
    besov_bound_ = std::max(besov_bound_, besov_norm(head, 1.0 + beta + epsilon));
    sup_u_ = std::max(sup_u_, head.sup_norm());
    std::vector<GridField> grads;
    for (int c = 0; c < d_; ++c) grads.push_back(gradient_v(head.extract(c)));
    for (std::size_t p = 0; p < f.size(); ++p) {
      double fro = 0.0;
      for (int c = 0; c < d_; ++c) {
        for (int k = 0; k < d_; ++k) fro += grads[c].at(p, k) * grads[c].at(p, k);
      }
      grad_bound_ = std::max(grad_bound_, std::sqrt(fro));
    }
    interp_.emplace_back(std::move(head));
  }
}

Eigen::VectorXd ZvonkinMaps::u1(double t, const Eigen::VectorXd& z) const {
  const int n = u_.n_points();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
  Eigen::VectorXd a(d_), b(d_);
  if (n == 1) {
    interp_[0].eval_all(z.data(), out.data());
    return out;
  }
  const double x = std::clamp((t - u_.t0()) / u_.dt(), 0.0, static_cast<double>(n - 1));
  const int i = std::min(static_cast<int>(std::floor(x)), n - 2);
  const double th = x - i;
  interp_[i].eval_all(z.data(), a.data());
  interp_[i + 1].eval_all(z.data(), b.data());
  return (1 - th) * a + th * b;
}

Eigen::VectorXd ZvonkinMaps::phi(double t, const Eigen::VectorXd& z) const {
  Eigen::VectorXd out = z;
  out.head(d_) += u1(t, z);
  return out;
}

ZvonkinMaps zvonkin_phi(const TimeField& u, double beta, double epsilon) {
  ZvonkinMaps maps(u, beta, epsilon);
  if (maps.gradient_bound() > 0.5) {
    KMV_THROW(kGradientBoundViolated,
              "sup |grad_v u| = " + std::to_string(maps.gradient_bound()) + " > 1/2");
  }
  return maps;
}

PsiResult zvonkin_psi_detail(const ZvonkinMaps& maps, double t, const Eigen::VectorXd& ztilde,
                             double tol, int max_iters) {
  const int d = maps.u().grid().blocks().d;
  PsiResult r;
  r.z = ztilde;
  const Eigen::VectorXd vt = ztilde.head(d);
  double prev_step = -1.0;
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd v = vt - maps.u1(t, r.z);
    const double step = (v - r.z.head(d)).norm();
    r.z.head(d) = v;
    r.iterations = it;
    if (prev_step > 1e-9) r.contraction = std::max(r.contraction, step / prev_step);
    if (step <= tol) return r;
    prev_step = step;
  }
  KMV_THROW(kNonConvergence, "inverse Zvonkin iteration did not converge");
}

Eigen::VectorXd zvonkin_psi(const ZvonkinMaps& maps, double t, const Eigen::VectorXd& ztilde) {
  return zvonkin_psi_detail(maps, t, ztilde).z;
}

}  // namespace kmv
