#include <doctest.h>

#include <random>

#include "kmv/error.hpp"
#include "kmv/fft.hpp"
#include "kmv/interp.hpp"
#include "kmv/spectral.hpp"

using namespace kmv;

namespace {

AnisoGrid kinetic_grid(int n = 128, double L = 6.0) {
  return AnisoGrid(KolmogorovModel::Make(kinetic_drift(1), 1).blocks, {L, L}, {n, n});
}

GridField noise(const AnisoGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  GridField f(g, 1);
  for (auto& v : f.values()) v = N(rng);
  return f;
}

}  // namespace

TEST_CASE("partition rows sum to one") {
  auto g = kinetic_grid();
  auto p = build_partition(g);
  for (std::size_t s = 0; s < g.spectral_size(); s += 7) {
    double sum = 0;
    for (int j = -1; j <= p->J_max(); ++j) sum += p->rho(j, s);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("Littlewood-Paley blocks reconstruct random fields") {
  auto g = kinetic_grid();
  for (unsigned s = 0; s < 5; ++s) {
    GridField f = noise(g, s);
    auto lp = lp_decompose(f);
    CHECK((lp.reconstruct() - f).sup_norm() <= 1e-10 * f.sup_norm());
  }
}

TEST_CASE("constant field lives in the lowest block") {
  auto g = kinetic_grid(64);
  GridField f(g, 1, 2.5);
  auto lp = lp_decompose(f);
  CHECK((lp.block(-1) - f).sup_norm() < 1e-12);
  for (int j = 0; j <= lp.J_max; ++j) CHECK(lp.block(j).sup_norm() < 1e-12);
}

TEST_CASE("single frequency only touches neighbouring blocks") {
  auto g = kinetic_grid(256);
  const double xi = 16 * 3.141592653589793 / 6.0;  // lattice mode 16, |xi| ~ 8.4
  GridField f = GridField::Sample(g, [&](const Eigen::VectorXd& z) { return std::cos(xi * z(0)); });
  auto lp = lp_decompose(f);
  for (int j = -1; j <= lp.J_max; ++j) {
    if (j < 2 || j > 4) CHECK(lp.block(j).sup_norm() < 1e-12);
  }
  CHECK(lp.block(3).sup_norm() > 0.1);
}

TEST_CASE("Besov norms decrease with the index") {
  auto g = kinetic_grid();
  GridField f = noise(g, 11);
  for (double a : {-0.5, 0.0, 0.3}) CHECK(besov_norm(f, a) <= besov_norm(f, a + 0.2) * (1 + 1e-12));
}

TEST_CASE("block sup norms: OpenMP path equals serial reference") {
  auto g = kinetic_grid();
  GridField f = noise(g, 5);
  auto a = block_sup_norms(f, Exec::kParallel);
  auto b = block_sup_norms(f, Exec::kSerial);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("bump transform") {
  CHECK(bump_hat(0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(bump_hat(40.0)) < 1e-3);
  CHECK(bump_hat(1.0) == doctest::Approx(bump_hat(-1.0)));
}

TEST_CASE("mollification does not raise the Besov norm") {
  auto g = kinetic_grid();
  GridField f = synthesize_besov_field(0.3, 7, g, 1);
  for (double n : {2.0, 8.0}) {
    GridField m = mollify(f, n, 0.125);
    CHECK(besov_norm(m, -0.3) <= besov_norm(f, -0.3) + 1e-9);
    CHECK(m.integral() == doctest::Approx(f.integral()).epsilon(1e-10));
  }
}

TEST_CASE("Bernstein gains scale as 2^{j(2i+1)}") {
  auto m = KolmogorovModel::Make(kinetic_drift(1), 1);
  AnisoGrid g(m.blocks, {12.0, 3.0}, {128, 8192});
  auto rep = bernstein_exponents(grid_impulse(g));
  REQUIRE(rep.exponent.size() == 2);
  CHECK(rep.exponent[0] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(rep.exponent[1] == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("coarse grids are refused") {
  CHECK_THROWS_AS(build_partition(kinetic_grid(8)), Error);
}

TEST_CASE("spectral resampler: refine then coarsen is the identity, directions adjoint") {
  auto g = kinetic_grid(32);
  AnisoGrid fine(g.blocks(), g.half_extents(), {64, 96});
  SpectralResampler up(g, fine), down(fine, g);
  GridField f = mollify(noise(g, 2), 4.0, 0.5);
  // drop the coarse Nyquist modes first; they are not carried over
  GridField f0 = down.apply(up.apply(f));
  CHECK((down.apply(up.apply(f0)) - f0).sup_norm() < 1e-12);
  GridField h = noise(fine, 3);
  const double lhs = up.apply(f).inner(h);
  const double rhs = f.inner(down.apply(h));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("upsample preserves values on the coarse nodes") {
  auto g = kinetic_grid(32);
  GridField f = GridField::Sample(g, [](const Eigen::VectorXd& z) { return std::exp(-z.squaredNorm()); });
  GridField u = upsample(f, 2);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      // exp(-|z|^2) is band-limited only up to ~exp(-nyquist^2/4) ~ 1e-8
      CHECK(std::abs(u.at((2 * i) * u.grid().stride(0) + 2 * j) - f.at(i * g.stride(0) + j)) < 1e-7);
}
