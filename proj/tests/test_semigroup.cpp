#include <doctest.h>

#include <random>

#include "kmv/error.hpp"
#include "kmv/kernels.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

using namespace kmv;

namespace {

KolmogorovModel kinetic() { return KolmogorovModel::Make(kinetic_drift(1), 1); }

GridField windowed(const AnisoGrid& g, std::uint64_t seed) {
  SynthesisOptions so;
  so.window = true;
  so.window_flat = 0.2;
  so.window_zero = 0.35;
  return synthesize_besov_field(0.3, seed, g, 1, so);
}

}  // namespace

TEST_CASE("kinetic covariance closed form") {
  auto m = kinetic();
  for (double t : {0.1, 0.5, 1.0}) {
    Eigen::MatrixXd ref(2, 2);
    ref << t, t * t / 2, t * t / 2, t * t * t / 3;
    CHECK((covariance(m, t) - ref).norm() <= 1e-12 * ref.norm());
  }
}

TEST_CASE("degenerate model has a singular covariance") {
  auto m = KolmogorovModel::MakeUnchecked(Eigen::MatrixXd::Zero(2, 2), 1);
  CHECK_THROWS_AS(covariance(m, 1.0), Error);
}

TEST_CASE("Gaussian on the grid has unit mass and the right variance") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {128, 128});
  const Eigen::MatrixXd C = covariance(m, 1.0);
  GridField G = gaussian_on_grid(g, C);
  CHECK(G.integral() == doctest::Approx(1.0).epsilon(1e-12));
  GridField v2 = GridField::Sample(g, [](const Eigen::VectorXd& z) { return z(0) * z(0); });
  double var = 0;
  for (std::size_t p = 0; p < g.size(); ++p) var += G.at(p) * v2.at(p);
  CHECK(var * g.cell_volume() == doctest::Approx(C(0, 0)).epsilon(1e-6));
  CHECK(G.at(g.size() / 2 + 64) == doctest::Approx(gamma_density(m, 1.0, Eigen::Vector2d::Zero())).epsilon(1e-8));
}

TEST_CASE("Chapman-Kolmogorov and duality on windowed fields") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {128, 128});
  for (std::uint64_t s = 0; s < 3; ++s) {
    GridField f = windowed(g, 100 + s), h = windowed(g, 200 + s);
    GridField a = apply_Pprime(m, 0.25, f);
    GridField b = apply_Pprime(m, 0.15, apply_Pprime(m, 0.1, f));
    CHECK((a - b).sup_norm() <= 1e-8 * a.sup_norm());
    GridField c = apply_P(m, 0.25, f);
    GridField d = apply_P(m, 0.15, apply_P(m, 0.1, f));
    CHECK((c - d).sup_norm() <= 1e-8 * c.sup_norm());
    const double lhs = apply_P(m, 0.3, f).inner(h);
    const double rhs = f.inner(apply_Pprime(m, 0.3, h));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * apply_P(m, 0.3, f).sup_norm() * h.sup_norm());
  }
}

TEST_CASE("P'_t conserves mass, P_t fixes constants") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {64, 64});
  GridField f = windowed(g, 9);
  CHECK(apply_Pprime(m, 0.4, f).integral() == doctest::Approx(f.integral()).epsilon(1e-12));
  GridField one(g, 1, 1.0);
  CHECK((apply_P(m, 0.4, one) - one).sup_norm() < 1e-12);
}

TEST_CASE("warp: OpenMP path equals serial, adjoint is exact") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {64, 64});
  Warp w(g, matrix_exp(m.B, 0.37));
  GridField f = windowed(g, 3), h = windowed(g, 4);
  GridField a = w.apply(f, Exec::kParallel);
  GridField b = w.apply(f, Exec::kSerial);
  CHECK((a - b).sup_norm() == 0.0);
  CHECK(a.inner(h) == doctest::Approx(f.inner(w.apply_adjoint(h))).epsilon(1e-12));
}

TEST_CASE("shear padding doubles the v axis for the kinetic box at T = 1") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {64, 64});
  AnisoGrid p = shear_padded_grid(m, g, 1.0);
  CHECK(p.points(0) == 128);
  CHECK(p.points(1) == 64);
  CHECK(shear_padded_grid(m, g, 0.0) == g);
}

TEST_CASE("kernel block decay: slope at most -1 in the decay regime") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {256, 256});
  std::vector<double> ts;
  for (int i = 0; i < 9; ++i) ts.push_back(std::pow(10.0, -3 + 2.5 * i / 8));
  auto rep = kernel_block_decay(m, g, ts, {1, 2, 3, 4, 5});
  CHECK(rep.fit_points >= 4);
  CHECK(rep.slope <= -1.0);
}

TEST_CASE("fit_slope recovers a power law") {
  std::vector<double> x, y;
  for (int i = 1; i < 6; ++i) {
    x.push_back(std::log(i));
    y.push_back(-0.6 * std::log(i) + 2);
  }
  CHECK(fit_slope(x, y) == doctest::Approx(-0.6).epsilon(1e-12));
}
