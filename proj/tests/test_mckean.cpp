#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "kmv/mckean.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

using namespace kmv;

namespace {

KolmogorovModel kinetic() { return KolmogorovModel::Make(kinetic_drift(1), 1); }

ParticleEnsemble at_origin(std::size_t M, std::uint64_t seed) {
  ParticleEnsemble e;
  e.N = 2;
  e.M = M;
  e.z.assign(2 * M, 0.0);
  e.seed = seed;
  return e;
}

}  // namespace

TEST_CASE("Philox4x32-10 known answers") {
  auto a = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(a == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  auto b = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(b == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("normals are standard and stream-addressed") {
  double a[4], b[4];
  philox_normals(7, 3, 11, 4, a);
  philox_normals(7, 3, 11, 4, b);
  for (int i = 0; i < 4; ++i) CHECK(a[i] == b[i]);
  philox_normals(7, 4, 11, 4, b);
  CHECK(a[0] != b[0]);
  double s = 0, s2 = 0;
  const int n = 200000;
  std::vector<double> v(n);
  for (int p = 0; p < n / 2; ++p) philox_normals(1, p, 0, 2, v.data() + 2 * p);
  for (double x : v) {
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1) < 0.01);
}

TEST_CASE("drift-free kinetic covariance matches C(t)") {
  auto m = kinetic();
  auto e = at_origin(40000, 9);
  SimulationOptions o;
  o.checkpoints = {0.5, 1.0};
  simulate(e, m, nullptr, 1.0, o);
  for (const auto& rec : e.records) {
    Eigen::MatrixXd S = ParticleEnsemble::covariance_of(rec.z, 2);
    Eigen::MatrixXd C = covariance(m, rec.t);
    for (int i = 0; i < 2; ++i) CHECK(S(i, i) == doctest::Approx(C(i, i)).epsilon(0.05));
    CHECK(S(0, 1) == doctest::Approx(C(0, 1)).epsilon(0.05));
  }
}

TEST_CASE("x increments carry no noise") {
  auto m = kinetic();
  auto e = at_origin(1000, 2);
  for (std::size_t i = 0; i < e.M; ++i) e.z[2 * i] = 1.0;
  SimulationOptions o;
  o.dt = 1e-3;
  simulate(e, m, nullptr, 1e-3, o);
  // one Euler step: x_1 = x_0 + v_0 dt exactly
  for (std::size_t i = 0; i < e.M; ++i) CHECK(e.z[2 * i + 1] == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("fixed seed gives bit-identical trajectories; serial path agrees") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {64, 64});
  SynthesisOptions so;
  so.window = true;
  so.amplitude = 0.3;
  TimeField D = mollify(synthesize_besov_field(0.3, 1, g, 1, 1.0, 5, so), 8, 0.125);
  GridField u0 = gaussian_on_grid(g, 0.25 * Eigen::MatrixXd::Identity(2, 2));
  SimulationOptions o;
  o.checkpoints = {0.1};
  auto a = sample_initial(u0, 3000, 4), b = a, c = a;
  simulate(a, m, &D, 0.1, o);
  simulate(b, m, &D, 0.1, o);
  o.exec = Exec::kSerial;
  simulate(c, m, &D, 0.1, o);
  CHECK(a.z == b.z);
  CHECK(a.z == c.z);
}

TEST_CASE("KDE: unit mass, binning paths agree, accuracy on a Gaussian") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {256, 256});
  const Eigen::MatrixXd S0 = 0.25 * Eigen::MatrixXd::Identity(2, 2);
  GridField u0 = GridField::Sample(g, [](const Eigen::VectorXd& z) { return std::exp(-2.0 * z.squaredNorm()); });
  u0 *= 1.0 / u0.integral();
  auto e = sample_initial(u0, 100000, 5);
  SimulationOptions o;
  simulate(e, m, nullptr, 1.0, o);
  GridField k = kde_density(e.z, 2, g);
  CHECK(k.integral() == doctest::Approx(1.0).epsilon(1e-3));
  GridField b1 = bin_particles(e.z, 2, g, Exec::kParallel);
  GridField b2 = bin_particles(e.z, 2, g, Exec::kSerial);
  CHECK((b1 - b2).sup_norm() <= 1e-12 * b1.sup_norm());
  // b = 0: Z_1 = e^B Z_0 + Gaussian(C(1))
  const Eigen::MatrixXd E = matrix_exp(m.B, 1.0);
  GridField ref = gaussian_on_grid(g, E * S0 * E.transpose() + covariance(m, 1.0));
  const double err = l1_distance(k, ref);
  MESSAGE("L1(kde, Gaussian) = " << err);
  CHECK(err <= 0.05);
}

TEST_CASE("KDE of a point mass") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {64, 64});
  auto e = at_origin(2000, 1);
  GridField k = kde_density(e.z, 2, g);
  CHECK(k.integral() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(k.max() == doctest::Approx(k.at(32 * 64 + 32)));
}

TEST_CASE("trajectory dump round trip") {
  auto m = kinetic();
  auto e = at_origin(500, 3);
  SimulationOptions o;
  o.checkpoints = {0.05, 0.1};
  simulate(e, m, nullptr, 0.1, o);
  const auto path = (std::filesystem::temp_directory_path() / "kmv_traj_test.traj").string();
  write_trajectories(path, e);
  auto r = read_trajectories(path);
  std::remove(path.c_str());
  CHECK(r.M == e.M);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[1].z == e.records[1].z);
  CHECK(r.records[0].t == e.records[0].t);
}

TEST_CASE("martingale increments vanish for g = 0") {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {32, 32});
  GridField u0 = GridField::Sample(g, [](const Eigen::VectorXd& z) { return std::exp(-2.0 * z.squaredNorm()); });
  u0 *= 1.0 / u0.integral();
  std::vector<GridField> gl{GridField(g, 1)};
  auto e = sample_initial(u0, 2000, 8);
  SimulationOptions o;
  o.checkpoints = {0.25, 0.5};
  o.integrands = gl;
  TimeField Bc = TimeField::Constant(0.0, 1.0, 2, GridField(g, 1));
  simulate(e, m, &Bc, 0.5, o);
  MartingaleOptions mo;
  mo.pairs = {{0.25, 0.5}};
  mo.backward.n_t = 4;
  auto rep = martingale_test(m, Bc, e, gl, mo);
  CHECK(rep.rows.size() == static_cast<std::size_t>(martingale_h_count()));
  for (const auto& r : rep.rows) {
    CHECK(r.mean == 0.0);
    CHECK(r.z == 0.0);
  }
}
