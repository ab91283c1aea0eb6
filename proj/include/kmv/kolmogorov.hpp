#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kmv/anisotropy.hpp"
#include "kmv/duhamel.hpp"
#include "kmv/fpsolver.hpp"
#include "kmv/grid.hpp"
#include "kmv/interp.hpp"

namespace kmv {

/// K u + <Bc, grad_v> u = lambda u + g on [0, T), u_T = ell.
struct BackwardProblem {
  KolmogorovModel model;
  /// d-channel singular drift.
  TimeField Bc;
  /// q-channel source; ell has q channels as well.
  TimeField g;
  GridField ell;
  double lambda = 0.0;
  double beta = 0.3;
  double epsilon = 0.2;
  double T = 1.0;

  double kappa() const { return beta + 0.5 * (epsilon + 1.0); }
  void validate() const;

  /// The Zvonkin system: g = -(Bc; 0) (N channels), ell = 0.
  static BackwardProblem Zvonkin(const KolmogorovModel& model, const TimeField& Bc,
                                 double lambda, double beta, double epsilon, double T);
};

struct BackwardSolution {
  /// q channels on the solver mesh.
  TimeField u;
  double rho = 0.0;
  double contraction = 0.0;
  int iterations = 0;
  std::vector<double> increments;
};

/// Fixed point of
///   u_t = e^{-lambda (T-t)} P_{T-t} ell
///         - int_t^T e^{-lambda (s-t)} P_{s-t}(g_s - <Bc_s, grad_v> u_s) ds
/// (the resolvent form of the mild equation), component by component.
BackwardSolution solve_kolmogorov(const BackwardProblem& problem, const SolverConfig& cfg);

/// Pointwise residual of the strong equation at the mesh times 0..n-2, with
/// the Lie derivative discretized along the flow.  Returns the sup over
/// times and points of |Y u + 1/2 Delta_v u + <Bc, grad_v u> - lambda u - g|
/// restricted to |z_k| <= window * L_k.
double kolmogorov_residual(const TimeField& u, const BackwardProblem& problem,
                           double window = 0.5);

struct LadderRung {
  double lambda = 0.0;
  double achieved_norm = 0.0;
};

struct LambdaSearchResult {
  double lambda = 0.0;
  double achieved_norm = 0.0;
  std::vector<LadderRung> ladder;
  BackwardSolution solution;
};

/// Smallest lambda in {1, 2, 4, ..., 2^20} such that
/// sup_t ||u_t||_{1+beta+eps} <= bound; throws LadderExhausted otherwise.
/// With `full_ladder`, keeps climbing to max_lambda and records every rung.
LambdaSearchResult lambda_bar_search(const BackwardProblem& problem, const SolverConfig& cfg,
                                     double bound = 0.5, double max_lambda = 1048576.0,
                                     bool full_ladder = false);

void write_ladder_csv(const std::string& path, const std::vector<LadderRung>& ladder);

class ZvonkinMaps {
 public:
  /// u has N channels; the trailing N - d must vanish.
  ZvonkinMaps(TimeField u, double beta, double epsilon);

  const TimeField& u() const { return u_; }
  /// sup_{t,z} ||grad_v u_{1..d}(t, z)||_op.
  double gradient_bound() const { return grad_bound_; }
  /// sup_t ||u_t||_{1+beta+eps}.
  double besov_bound() const { return besov_bound_; }
  double sup_u() const { return sup_u_; }

  /// u_{1..d}(t, z) (time-linear, space-cubic interpolation).
  Eigen::VectorXd u1(double t, const Eigen::VectorXd& z) const;
  /// phi_t(z) = z + u_t(z).
  Eigen::VectorXd phi(double t, const Eigen::VectorXd& z) const;

 private:
  TimeField u_;
  int d_ = 1;
  double grad_bound_ = 0.0;
  double besov_bound_ = 0.0;
  double sup_u_ = 0.0;
  std::vector<PeriodicInterpolator> interp_;
};

/// Wraps u; throws GradientBoundViolated when the gradient certificate
/// exceeds 1/2.
ZvonkinMaps zvonkin_phi(const TimeField& u, double beta, double epsilon);

struct PsiResult {
  Eigen::VectorXd z;
  int iterations = 0;
  /// Largest observed ratio |v_{k+1} - v_k| / |v_k - v_{k-1}|.
  double contraction = 0.0;
};

PsiResult zvonkin_psi_detail(const ZvonkinMaps& maps, double t, const Eigen::VectorXd& ztilde,
                             double tol = 1e-10, int max_iters = 200);
Eigen::VectorXd zvonkin_psi(const ZvonkinMaps& maps, double t, const Eigen::VectorXd& ztilde);

}  // namespace kmv
