#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kmv/anisotropy.hpp"
#include "kmv/duhamel.hpp"
#include "kmv/grid.hpp"

namespace kmv {

/// F(s) = f(s) K with a scalar profile f and a constant d x m matrix K;
/// Ftilde(s) = s F(s).
struct NonlinearitySpec {
  std::string id;
  std::function<double(double)> f;
  std::function<double(double)> df;
  Eigen::MatrixXd K;

  /// Bounds measured on a sample lattice of s values.
  double sup_dF = 0.0;
  double lip_dF = 0.0;
  double sup_dFtilde = 0.0;
  double lip_dFtilde = 0.0;

  double F(double s) const { return f(s); }
  double Ftilde(double s) const { return s * f(s); }

  /// 1 / (1 + s^2).
  static NonlinearitySpec Rational(int d = 1, int m = 1);
  /// F = c.
  static NonlinearitySpec Constant(double c = 1.0, int d = 1, int m = 1);
  /// "rational" | "constant" | "linear" (alias of constant 1).
  static NonlinearitySpec FromId(const std::string& id, int d = 1, int m = 1);

  /// Measures the derivative bounds on [-s_max, s_max] and throws
  /// InvalidArgument when they are not finite.
  void check(double s_max = 50.0, int samples = 200001);
};

struct FPProblem {
  KolmogorovModel model;
  /// m-channel drift on the solver mesh.
  TimeField b;
  GridField u0;
  double beta = 0.3;
  double epsilon = 0.2;
  double T = 1.0;
  /// Demand u0 >= 0 with unit mass.
  bool require_probability = true;

  /// kappa = beta + (epsilon + 1) / 2.
  double kappa() const { return beta + 0.5 * (epsilon + 1.0); }
  void validate() const;
};

struct SolverConfig {
  /// Starting exponential weight; later rungs are max(2 rho, 1/T).
  double rho = 0.0;
  int rho_retries = 3;
  double contraction_target = 0.9;
  double picard_tol = 1e-8;
  int max_iters = 30;
  /// Number of time intervals (the mesh has n_t + 1 points).
  int n_t = 128;
  QuadratureRule rule = QuadratureRule::kExponential;
  double cache_bytes = 1.2e9;
  Exec exec = Exec::kParallel;
};

struct IterationRecord {
  int iteration = 0;
  /// Besov norms ||w^{k+1}_t - w^k_t||_{beta+eps} per mesh time.
  std::vector<double> per_time;
  /// Weighted increment at the solver's final rho.
  double increment = 0.0;
  double seconds = 0.0;
};

struct FPSolution {
  TimeField u;
  TimeField w;
  std::vector<IterationRecord> history;
  double rho = 0.0;
  double contraction = 0.0;
  int iterations = 0;
  /// max_i ||u_{t_{i+1}} - u_{t_i}||_inf.
  double continuity_modulus = 0.0;
};

/// sup_t e^{-rho t} ||w_t||_gamma over a mesh.
double rho_norm(const TimeField& w, double rho, double gamma);
double rho_norm_from_blocks(const std::vector<double>& per_time, const TimeField& mesh, double rho);

/// div_v(Ftilde(w_s + (P'_s u0)) b_s).
GridField fp_rhs(const GridField& w_s, const GridField& Pu0_s, const GridField& b_s,
                 const NonlinearitySpec& nonlin);

class FPSolver {
 public:
  /// `shared` lets several solvers on the same model, grid, horizon and
  /// mesh reuse one set of quadrature weights.
  FPSolver(FPProblem problem, NonlinearitySpec nonlin, SolverConfig cfg,
           std::shared_ptr<const Duhamel> shared = nullptr);
  ~FPSolver();

  const FPProblem& problem() const { return problem_; }
  const SolverConfig& config() const { return cfg_; }
  /// P'_t u0 on the mesh.
  const TimeField& free_evolution() const { return free_; }
  /// Null when b vanishes identically.
  std::shared_ptr<const Duhamel> duhamel() const { return duhamel_; }

  GridField rhs(const TimeField& w, int i) const;
  /// (J w)_t = - int_0^t P'_{t-s} div_v G_s(w) ds.
  TimeField J(const TimeField& w) const;
  FPSolution solve() const;

 private:
  FPProblem problem_;
  NonlinearitySpec nonlin_;
  SolverConfig cfg_;
  TimeField free_;
  std::shared_ptr<const Duhamel> duhamel_;
};

/// Free-standing forms of the operations above.
GridField fp_rhs(const TimeField& w, const FPProblem& problem, const NonlinearitySpec& nonlin,
                 int i);
TimeField picard_J(const TimeField& w, const FPProblem& problem, const NonlinearitySpec& nonlin,
                   const SolverConfig& cfg);
FPSolution solve_fp(const FPProblem& problem, const NonlinearitySpec& nonlin,
                    const SolverConfig& cfg);

struct ConservationReport {
  std::vector<double> times;
  std::vector<double> mass;
  std::vector<double> min_value;
  std::vector<double> negative_fraction;
  double max_mass_deviation = 0.0;
  double global_min = 0.0;
  bool ok = false;
};

ConservationReport conservation_report(const TimeField& u, double expected_mass = 1.0,
                                       double delta = 1e-3);
void write_conservation_csv(const std::string& path, const ConservationReport& r);

/// Smooth compactly supported test function prod_k bump((z_k - c_k) / r_k).
GridField bump_test_function(const AnisoGrid& grid, const Eigen::VectorXd& center,
                             const Eigen::VectorXd& radius);

/// max_t |<u_t, phi> - <u0, phi> - int_0^t <u_s, A phi> + <Ftilde(u_s) b_s, grad_v phi> ds|
/// (trapezoid in time), for one test function.
double weak_form_residual(const TimeField& u, const FPProblem& problem,
                          const NonlinearitySpec& nonlin, const GridField& phi);

}  // namespace kmv
