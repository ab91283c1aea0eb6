#include <doctest.h>

#include <random>

#include "kmv/error.hpp"
#include "kmv/fpsolver.hpp"
#include "kmv/kolmogorov.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

using namespace kmv;

namespace {

struct Setup {
  KolmogorovModel model = KolmogorovModel::Make(kinetic_drift(1), 1);
  AnisoGrid grid{model.blocks, {6.0, 6.0}, {64, 64}};

  GridField bump(double cv, double cx, double s2) const {
    return GridField::Sample(grid, [&](const Eigen::VectorXd& z) {
      return std::exp(-((z(0) - cv) * (z(0) - cv) + (z(1) - cx) * (z(1) - cx)) / s2);
    });
  }
  TimeField zero_drift(int n) const { return TimeField::Constant(0.0, 1.0, n, GridField(grid, 1)); }
  TimeField drift(int n, double amplitude) const {
    SynthesisOptions so;
    so.window = true;
    so.amplitude = amplitude;
    return mollify(synthesize_besov_field(0.3, 5, grid, 1, 1.0, n, so), 8, 0.125);
  }
};

SolverConfig small(int n_t) {
  SolverConfig c;
  c.n_t = n_t;
  return c;
}

}  // namespace

TEST_CASE("drift-free terminal value problem is P_{T-t} ell with discount") {
  Setup s;
  BackwardProblem p;
  p.model = s.model;
  p.Bc = s.zero_drift(2);
  p.ell = s.bump(0.3, -0.2, 0.4);
  p.g = TimeField::Constant(0.0, 1.0, 2, GridField(s.grid, 1));
  p.lambda = 2.0;
  auto sol = solve_kolmogorov(p, small(8));
  for (int i = 0; i < sol.u.n_points(); ++i) {
    const double tau = 1.0 - sol.u.time(i);
    GridField ref = std::exp(-2.0 * tau) * apply_P(s.model, tau, p.ell);
    CHECK((sol.u[i] - ref).sup_norm() <= 1e-12);
  }
}

TEST_CASE("forward and backward values agree (drift-free duality)") {
  Setup s;
  GridField u0 = s.bump(-0.4, 0.1, 0.3);
  u0 *= 1.0 / u0.integral();
  GridField ell = s.bump(0.5, 0.2, 0.8);
  FPProblem fp{s.model, s.zero_drift(9), u0, 0.3, 0.2, 1.0};
  auto fsol = solve_fp(fp, NonlinearitySpec::Rational(), small(8));
  BackwardProblem bp;
  bp.model = s.model;
  bp.Bc = s.zero_drift(2);
  bp.ell = ell;
  bp.g = TimeField::Constant(0.0, 1.0, 2, GridField(s.grid, 1));
  auto bsol = solve_kolmogorov(bp, small(8));
  const double fwd = fsol.u[8].inner(ell);
  const double bwd = u0.inner(bsol.u[0]);
  CHECK(std::abs(fwd - bwd) <= 1e-6 * std::abs(fwd));
}

TEST_CASE("backward solve with drift satisfies the strong equation") {
  Setup s;
  BackwardProblem p = BackwardProblem::Zvonkin(s.model, s.drift(17, 0.2), 4.0, 0.3, 0.2, 1.0);
  auto sol = solve_kolmogorov(p, small(16));
  CHECK(sol.contraction < 0.9);
  CHECK(sol.u.channels() == 2);
  // the x component of the Zvonkin system has no source
  for (int i = 0; i < sol.u.n_points(); ++i) CHECK(sol.u[i].extract(1).sup_norm() == 0.0);
  // the residual is a first-order difference in time: it must shrink with the mesh
  const double r16 = kolmogorov_residual(sol.u, p);
  const double r64 = kolmogorov_residual(solve_kolmogorov(p, small(64)).u, p);
  MESSAGE("residual n_t=16: " << r16 << ", n_t=64: " << r64);
  CHECK(r64 < 0.5 * r16);
}

TEST_CASE("lambda ladder and Zvonkin round trip") {
  Setup s;
  BackwardProblem p = BackwardProblem::Zvonkin(s.model, s.drift(9, 0.2), 1.0, 0.3, 0.2, 1.0);
  auto res = lambda_bar_search(p, small(8));
  CHECK(res.achieved_norm <= 0.5);
  CHECK(res.lambda >= 1.0);
  for (std::size_t i = 0; i + 1 < res.ladder.size(); ++i) CHECK(res.ladder[i].achieved_norm > 0.5);
  auto maps = zvonkin_phi(res.solution.u, 0.3, 0.2);
  CHECK(maps.gradient_bound() <= 0.5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd z(2);
    z << U(rng), U(rng);
    const double t = 0.5 + 0.25 * U(rng) / 2;
    auto r = zvonkin_psi_detail(maps, t, maps.phi(t, z));
    CHECK((r.z - z).norm() <= 1e-8);
    CHECK(r.contraction <= 0.55);
  }
}

TEST_CASE("zero drift needs no ladder") {
  Setup s;
  BackwardProblem p = BackwardProblem::Zvonkin(s.model, s.zero_drift(2), 1.0, 0.3, 0.2, 1.0);
  auto res = lambda_bar_search(p, small(4));
  CHECK(res.lambda == 1.0);
  CHECK(res.achieved_norm == 0.0);
}
