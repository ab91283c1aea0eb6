#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kmv/anisotropy.hpp"
#include "kmv/fpsolver.hpp"
#include "kmv/grid.hpp"
#include "kmv/interp.hpp"
#include "kmv/kernels.hpp"

namespace kmv {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                         std::array<std::uint32_t, 2> key);

/// Standard normals for stream (seed, particle, step): fills out[0..n).
void philox_normals(std::uint64_t seed, std::uint64_t particle, std::uint32_t step, int n,
                    double* out);

struct Checkpoint {
  double t = 0.0;
  /// M x N states, row-major.
  std::vector<double> z;
  /// M x (number of integrands): running int_0^t g_j(Z_s) ds.
  std::vector<double> integrals;
};

struct ParticleEnsemble {
  int N = 0;
  std::size_t M = 0;
  std::vector<double> z;
  double t = 0.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  long long escapes = 0;
  long long particle_steps = 0;
  std::vector<Checkpoint> records;

  const double* state(std::size_t i) const { return z.data() + i * N; }
  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;
  static Eigen::MatrixXd covariance_of(const std::vector<double>& z, int N);
};

/// M draws from a grid density: each particle picks a cell by inverse CDF
/// and is jittered uniformly inside it.
ParticleEnsemble sample_initial(const GridField& u0, std::size_t M, std::uint64_t seed);

enum class StepScheme { kEuler, kExactOU };

struct SimulationOptions {
  double dt = 1e-3;
  StepScheme scheme = StepScheme::kEuler;
  /// Recording times (snapped to the step grid).
  std::vector<double> checkpoints;
  /// Scalar fields integrated along trajectories (trapezoid in time).
  std::vector<GridField> integrands;
  /// Band-limited refinement of the drift before cubic interpolation.
  int drift_upsample = 1;
  Exec exec = Exec::kParallel;
};

/// Advances the ensemble to time T under
///   dV = (D(t, Z) + B_0 Z) dt + dW,   dX = B_1 Z dt,
/// D given by `drift` (d channels; nullptr for D = 0).  Particles leaving
/// the box are wrapped and counted.
void simulate(ParticleEnsemble& ens, const KolmogorovModel& model, const TimeField* drift,
              double T, const SimulationOptions& opts, const AnisoGrid* box = nullptr);

/// Gaussian KDE on the grid: cloud-in-cell binning then spectral smoothing
/// with per-coordinate Silverman bandwidths.
GridField kde_density(const std::vector<double>& z, int N, const AnisoGrid& grid,
                      Exec exec = Exec::kParallel);
GridField kde_density(const ParticleEnsemble& ens, const AnisoGrid& grid);
/// Binning only (mass per cell / cell volume).
GridField bin_particles(const std::vector<double>& z, int N, const AnisoGrid& grid,
                        Exec exec = Exec::kParallel);

double l1_distance(const GridField& a, const GridField& b);

struct MarginalReport {
  std::vector<double> times;
  std::vector<double> l1;
  std::size_t M = 0;
  long long escapes = 0;
};

/// Simulates the linear SDE with drift D = F(u_t) b_t frozen from the FP
/// solution and compares the KDE marginals with u_t.
MarginalReport validate_marginals(const KolmogorovModel& model, const TimeField& u,
                                  const TimeField& b, const NonlinearitySpec& nonlin,
                                  std::size_t M, std::uint64_t seed,
                                  const std::vector<double>& times, double dt = 1e-3,
                                  StepScheme scheme = StepScheme::kEuler,
                                  int drift_upsample = 4);

/// D(t, z) = F(u_t(z)) K b_t(z), d channels.
TimeField frozen_drift(const TimeField& u, const TimeField& b, const NonlinearitySpec& nonlin);

struct MartingaleRow {
  int g_id = 0;
  int h_id = 0;
  double s = 0.0;
  double t = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  bool pass = false;
};

struct MartingaleReport {
  std::vector<MartingaleRow> rows;
  std::size_t M = 0;
  int failures = 0;
  double max_abs_z = 0.0;
};

struct MartingaleOptions {
  /// Pairs (s, t); each must be a recorded checkpoint of the ensemble.
  std::vector<std::pair<double, double>> pairs;
  /// Horizon of the backward problems.
  double T = 1.0;
  SolverConfig backward;
  double beta = 0.3;
  double epsilon = 0.2;
  /// Adds perturb * z_0^2 to every u (fault injection): its generator
  /// contributes perturb per unit time, so M^u picks up a drift.
  double perturb = 0.0;
  int u_upsample = 2;
  double threshold = 3.0;
};

/// For each g solves K u + <Bc, grad_v> u = g, u_T = 0, and tests
/// E[(M^u_t - M^u_s) h] = 0 for h in a fixed panel of bounded functionals of
/// the path up to s (products of tanh of coordinates).  The ensemble must
/// have been simulated with `g_list` as integrands.
MartingaleReport martingale_test(const KolmogorovModel& model, const TimeField& Bc,
                                 const ParticleEnsemble& ens, const std::vector<GridField>& g_list,
                                 const MartingaleOptions& opts);

/// Number of h functionals in the martingale panel.
int martingale_h_count();

void write_martingale_csv(const std::string& path, const MartingaleReport& r);

/// Checkpoint dump: one JSON header line {M, N, seed, dt, checkpoint_times,
/// integrands}, then per checkpoint the M x N states and the M x q running
/// integrals as little-endian f64.
void write_trajectories(const std::string& path, const ParticleEnsemble& ens);
ParticleEnsemble read_trajectories(const std::string& path);

}  // namespace kmv

