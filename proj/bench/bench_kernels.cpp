// OpenMP kernels against their serial reference paths.  Argument 0 is the
// parallel path, 1 the serial one.
//
//   bench_kernels --benchmark_filter=Warp

#include <benchmark/benchmark.h>

#include <cmath>

#include "kmv/anisotropy.hpp"
#include "kmv/duhamel.hpp"
#include "kmv/mckean.hpp"
#include "kmv/semigroup.hpp"
#include "kmv/spectral.hpp"

using namespace kmv;

namespace {

KolmogorovModel kinetic() { return KolmogorovModel::Make(kinetic_drift(1), 1); }

Exec exec_of(const benchmark::State& st) { return st.range(0) == 0 ? Exec::kParallel : Exec::kSerial; }

void label(benchmark::State& st) { st.SetLabel(st.range(0) == 0 ? "parallel" : "serial"); }

GridField bump(const AnisoGrid& g) {
  return GridField::Sample(g, [](const Eigen::VectorXd& z) { return std::exp(-z.squaredNorm()); });
}

ParticleEnsemble ensemble(std::size_t M) {
  auto g = AnisoGrid(kinetic().blocks, {6.0, 6.0}, {64, 64});
  GridField u0 = bump(g);
  u0 *= 1.0 / u0.integral();
  return sample_initial(u0, M, 1);
}

void BM_WarpApply(benchmark::State& st) {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {256, 256});
  Warp w(g, matrix_exp(m.B, 0.3));
  GridField f = bump(g), out(g, 1);
  for (auto _ : st) {
    w.apply(f.channel(0), out.channel(0), exec_of(st));
    benchmark::DoNotOptimize(out.channel(0));
  }
  label(st);
}
BENCHMARK(BM_WarpApply)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ApplyP(benchmark::State& st) {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {256, 256});
  GridField f = bump(g);
  for (auto _ : st) benchmark::DoNotOptimize(apply_P(m, 0.1, f, exec_of(st)));
  label(st);
}
BENCHMARK(BM_ApplyP)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BlockSupNorms(benchmark::State& st) {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {256, 256});
  GridField f = bump(g);
  for (auto _ : st) benchmark::DoNotOptimize(block_sup_norms(f, exec_of(st)));
  label(st);
}
BENCHMARK(BM_BlockSupNorms)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DuhamelIntegrate(benchmark::State& st) {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {64, 64});
  const int n = 16;
  Duhamel duh(m, g, 0.0, 1.0, n, Direction::kForward);
  std::vector<GridField> data(n, bump(g));
  duh.integrate(data, Exec::kParallel);  // weights cached outside the timing
  for (auto _ : st) benchmark::DoNotOptimize(duh.integrate(data, exec_of(st)));
  label(st);
}
BENCHMARK(BM_DuhamelIntegrate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& st) {
  auto m = kinetic();
  SimulationOptions o;
  o.dt = 1e-2;
  o.exec = exec_of(st);
  for (auto _ : st) {
    st.PauseTiming();
    auto e = ensemble(20000);
    st.ResumeTiming();
    simulate(e, m, nullptr, 0.5, o);
    benchmark::DoNotOptimize(e.z.data());
  }
  label(st);
}
BENCHMARK(BM_Simulate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BinParticles(benchmark::State& st) {
  auto m = kinetic();
  AnisoGrid g(m.blocks, {6.0, 6.0}, {256, 256});
  auto e = ensemble(100000);
  for (auto _ : st) benchmark::DoNotOptimize(bin_particles(e.z, 2, g, exec_of(st)));
  label(st);
}
BENCHMARK(BM_BinParticles)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
