#include <doctest.h>

#include "kmv/error.hpp"
#include "kmv/fpsolver.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

using namespace kmv;

namespace {

struct Setup {
  KolmogorovModel model = KolmogorovModel::Make(kinetic_drift(1), 1);
  AnisoGrid grid{model.blocks, {6.0, 6.0}, {64, 64}};
  GridField u0;
  TimeField b;

  explicit Setup(int n_t, double amplitude = 0.2) {
    u0 = GridField::Sample(grid, [](const Eigen::VectorXd& z) { return std::exp(-z.squaredNorm() / 0.5); });
    u0 *= 1.0 / u0.integral();
    SynthesisOptions so;
    so.window = true;
    so.amplitude = amplitude;
    b = mollify(synthesize_besov_field(0.3, 3, grid, 1, 1.0, n_t + 1, so), 8, 0.125);
  }
  FPProblem problem() const { return FPProblem{model, b, u0, 0.3, 0.2, 1.0}; }
};

SolverConfig small(int n_t) {
  SolverConfig c;
  c.n_t = n_t;
  return c;
}

}  // namespace

TEST_CASE("zero drift gives the free evolution") {
  Setup s(8);
  FPProblem p = s.problem();
  p.b = TimeField::Constant(0.0, 1.0, 9, GridField(s.grid, 1));
  auto sol = solve_fp(p, NonlinearitySpec::Rational(), small(8));
  for (int i = 0; i < sol.u.n_points(); ++i)
    CHECK((sol.u[i] - apply_Pprime(s.model, sol.u.time(i), s.u0)).sup_norm() <= 1e-10);
}

TEST_CASE("Picard iteration contracts and conserves mass") {
  Setup s(8);
  auto sol = solve_fp(s.problem(), NonlinearitySpec::Rational(), small(8));
  CHECK(sol.iterations <= 30);
  CHECK(sol.contraction <= 0.9);
  CHECK(sol.history.back().increment < 1e-8);
  auto cr = conservation_report(sol.u);
  CHECK(cr.max_mass_deviation < 1e-3);
  CHECK(cr.global_min >= -1e-3);
  CHECK(cr.ok);
}

TEST_CASE("solution satisfies the weak form") {
  Setup s(16);
  const auto nl = NonlinearitySpec::Rational();
  auto sol = solve_fp(s.problem(), nl, small(16));
  Eigen::VectorXd c = Eigen::VectorXd::Zero(2), r = Eigen::VectorXd::Constant(2, 1.5);
  GridField phi = bump_test_function(s.grid, c, r);
  CHECK(weak_form_residual(sol.u, s.problem(), nl, phi) < 5e-3);
}

TEST_CASE("J is a fixed point map of the solution") {
  Setup s(8);
  FPSolver solver(s.problem(), NonlinearitySpec::Rational(), small(8));
  auto sol = solver.solve();
  TimeField Jw = solver.J(sol.w);
  double d = 0;
  for (int i = 0; i < Jw.n_points(); ++i) d = std::max(d, besov_norm(Jw[i] - sol.w[i], 0.5));
  CHECK(d < 1e-7);
}

TEST_CASE("serial and OpenMP solves agree") {
  Setup s(4);
  SolverConfig a = small(4), b = small(4);
  b.exec = Exec::kSerial;
  auto ua = solve_fp(s.problem(), NonlinearitySpec::Rational(), a).u;
  auto ub = solve_fp(s.problem(), NonlinearitySpec::Rational(), b).u;
  for (int i = 0; i < ua.n_points(); ++i) CHECK((ua[i] - ub[i]).sup_norm() <= 1e-12);
}

TEST_CASE("shared quadrature weights must match the problem") {
  Setup s(8);
  FPSolver first(s.problem(), NonlinearitySpec::Rational(), small(8));
  FPSolver second(s.problem(), NonlinearitySpec::Rational(), small(8), first.duhamel());
  CHECK(second.duhamel() == first.duhamel());
  Setup t(4);
  CHECK_THROWS_AS(FPSolver(t.problem(), NonlinearitySpec::Rational(), small(4), first.duhamel()), Error);
}

TEST_CASE("precondition violations") {
  Setup s(4);
  FPProblem p = s.problem();
  p.beta = 0.6;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("beta must lie in (0, 1/2)"), Error);
  p = s.problem();
  p.epsilon = 0.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p = s.problem();
  p.u0 *= 2.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("nonlinearity bounds") {
  auto nl = NonlinearitySpec::Rational();
  nl.check();
  CHECK(nl.sup_dF == doctest::Approx(3 * std::sqrt(3.0) / 8).epsilon(1e-3));
  CHECK(nl.Ftilde(2.0) == doctest::Approx(0.4));
  CHECK_THROWS_AS(NonlinearitySpec::FromId("cubic"), Error);
}
