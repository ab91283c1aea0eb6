#include "kmv/mckean.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "kmv/error.hpp"
#include "kmv/fft.hpp"
#include "kmv/kolmogorov.hpp"
#include "kmv/semigroup.hpp"

namespace kmv {

namespace {
constexpr double kPi = 3.141592653589793;
constexpr std::uint32_t kSamplingStep = 0xFFFFFFFFu;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit_open(std::uint32_t x) { return (x + 1.0) * 0x1p-32; }   // (0, 1]
inline double to_unit(std::uint32_t x) { return x * 0x1p-32; }                 // [0, 1)

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                         std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(0xD2511F53u, c[0], hi0, lo0);
    mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

void philox_normals(std::uint64_t seed, std::uint64_t particle, std::uint32_t step, int n,
                    double* out) {
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                         static_cast<std::uint32_t>(seed >> 32)};
  for (int b = 0; 4 * b < n; ++b) {
    const auto r = philox4x32({static_cast<std::uint32_t>(particle),
                               static_cast<std::uint32_t>(particle >> 32), step,
                               static_cast<std::uint32_t>(b)},
                              key);
    for (int pair = 0; pair < 2; ++pair) {
      const int idx = 4 * b + 2 * pair;
      if (idx >= n) break;
      const double rad = std::sqrt(-2.0 * std::log(to_unit_open(r[2 * pair])));
      const double ang = 2.0 * kPi * to_unit(r[2 * pair + 1]);
      out[idx] = rad * std::cos(ang);
      if (idx + 1 < n) out[idx + 1] = rad * std::sin(ang);
    }
  }
}

Eigen::VectorXd ParticleEnsemble::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(N);
  for (std::size_t i = 0; i < M; ++i) {
    for (int k = 0; k < N; ++k) m(k) += z[i * N + k];
  }
  return m / static_cast<double>(M);
}

Eigen::MatrixXd ParticleEnsemble::covariance_of(const std::vector<double>& z, int N) {
  const std::size_t M = z.size() / N;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(N);
  for (std::size_t i = 0; i < M; ++i) {
    for (int k = 0; k < N; ++k) m(k) += z[i * N + k];
  }
  m /= static_cast<double>(M);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t i = 0; i < M; ++i) {
    for (int a = 0; a < N; ++a) {
      for (int b = 0; b < N; ++b) C(a, b) += (z[i * N + a] - m(a)) * (z[i * N + b] - m(b));
    }
  }
  return C / static_cast<double>(M - 1);
}

Eigen::MatrixXd ParticleEnsemble::covariance() const { return covariance_of(z, N); }

ParticleEnsemble sample_initial(const GridField& u0, std::size_t M, std::uint64_t seed) {
  KMV_DEMAND(M >= 1 && u0.channels() == 1, "sample_initial needs M >= 1 and a scalar density");
  const AnisoGrid& grid = u0.grid();
  const double top = u0.max();
  if (!(top > 0) || u0.min() < -1e-9 * top || !u0.all_finite()) {
    KMV_THROW(kNotADensity, "initial datum is not a nonnegative density");
  }
  const double mass = u0.integral();
  if (std::abs(mass - 1.0) > 1e-3) {
    KMV_THROW(kNotADensity, "initial datum has mass " + std::to_string(mass));
  }
  std::vector<double> cdf(grid.size());
  double acc = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    acc += std::max(u0.at(p), 0.0);
    cdf[p] = acc;
  }
  ParticleEnsemble ens;
  ens.N = grid.dim();
  ens.M = M;
  ens.seed = seed;
  ens.z.resize(M * ens.N);
  const int N = ens.N;
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                         static_cast<std::uint32_t>(seed >> 32)};
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(M); ++i) {
    std::array<double, 8> u{};
    for (int b = 0; 4 * b < N + 1; ++b) {
      const auto r = philox4x32({static_cast<std::uint32_t>(i),
                                 static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32),
                                 kSamplingStep, static_cast<std::uint32_t>(b)},
                                key);
      for (int q = 0; q < 4 && 4 * b + q < 8; ++q) u[4 * b + q] = to_unit(r[q]);
    }
    const double target = u[0] * acc;
    std::size_t p = std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin();
    p = std::min(p, grid.size() - 1);
    for (int k = 0; k < N; ++k) {
      const int idx = static_cast<int>((p / grid.stride(k)) % grid.points(k));
      ens.z[i * N + k] = grid.coord(k, idx) + (u[k + 1] - 0.5) * grid.spacing(k);
    }
  }
  return ens;
}

namespace {

struct DriftEval {
  std::vector<PeriodicInterpolator> interp;
  double t0 = 0.0;
  double dt = 0.0;
  int d = 0;

  void eval(double t, const double* z, double* out, double* scratch) const {
    const int n = static_cast<int>(interp.size());
    if (n == 1) {
      interp[0].eval_all(z, out);
      return;
    }
    const double x = std::clamp((t - t0) / dt, 0.0, static_cast<double>(n - 1));
    const int i = std::min(static_cast<int>(std::floor(x)), n - 2);
    const double th = x - i;
    interp[i].eval_all(z, out);
    if (th > 0) {
      interp[i + 1].eval_all(z, scratch);
      for (int c = 0; c < d; ++c) out[c] = (1 - th) * out[c] + th * scratch[c];
    }
  }
};

}  // namespace

void simulate(ParticleEnsemble& ens, const KolmogorovModel& model, const TimeField* drift,
              double T, const SimulationOptions& opts, const AnisoGrid* box) {
  const int N = ens.N;
  const int d = model.d();
  KMV_DEMAND(model.N() == N, "model and ensemble dimensions differ");
  KMV_DEMAND(opts.dt > 0, "dt must be positive");
  KMV_DEMAND(T >= ens.t, "cannot simulate backwards");
  ens.dt = opts.dt;
  const double t_start = ens.t;
  const long long n_steps = std::llround((T - t_start) / opts.dt);

  DriftEval D;
  D.d = d;
  if (drift) {
    KMV_DEMAND(drift->channels() == d, "drift must have d channels");
    for (const auto& f : drift->fields()) D.interp.emplace_back(upsample(f, opts.drift_upsample));
    D.t0 = drift->t0();
    D.dt = drift->dt();
    if (!box) box = &drift->grid();
  }
  std::vector<PeriodicInterpolator> G;
  for (const auto& g : opts.integrands) {
    KMV_DEMAND(g.channels() == 1, "integrands must be scalar");
    G.emplace_back(g);
    if (!box) box = &g.grid();
  }
  const int nG = static_cast<int>(G.size());

  // Checkpoint step indices.
  std::vector<long long> cp_step;
  const std::size_t first_record = ens.records.size();
  for (double c : opts.checkpoints) {
    KMV_DEMAND(c >= t_start - 1e-12 && c <= T + 1e-12, "checkpoint outside the run");
    cp_step.push_back(std::llround((c - t_start) / opts.dt));
    Checkpoint rec;
    rec.t = t_start + cp_step.back() * opts.dt;
    rec.z.resize(ens.M * N);
    rec.integrals.resize(ens.M * nG);
    ens.records.push_back(std::move(rec));
  }

  const Eigen::MatrixXd& B = model.B;
  Eigen::MatrixXd expB, Gd, Lc;
  if (opts.scheme == StepScheme::kExactOU) {
    expB = matrix_exp(B, opts.dt);
    // int_0^dt e^{uB} du sigma via the augmented exponential.
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * N, 2 * N);
    aug.topLeftCorner(N, N) = B;
    aug.topRightCorner(N, N) = Eigen::MatrixXd::Identity(N, N);
    Gd = matrix_exp(aug, opts.dt).topRightCorner(N, N) * model.sigma;
    Lc = Eigen::LLT<Eigen::MatrixXd>(covariance(model, opts.dt)).matrixL();
  }
  const double sq = std::sqrt(opts.dt);
  long long escapes = 0;

  auto run_particle = [&](long long i) {
    std::vector<double> z(ens.z.begin() + i * N, ens.z.begin() + (i + 1) * N);
    std::vector<double> zn(N), xi(N), dv(std::max(d, 1)), scratch(std::max(d, 1));
    std::vector<double> integ(nG, 0.0), g_old(nG, 0.0);
    for (int j = 0; j < nG; ++j) g_old[j] = G[j](z.data());
    long long esc = 0;
    auto record = [&](long long step) {
      for (std::size_t c = 0; c < cp_step.size(); ++c) {
        if (cp_step[c] != step) continue;
        Checkpoint& rec = ens.records[first_record + c];
        std::copy(z.begin(), z.end(), rec.z.begin() + i * N);
        std::copy(integ.begin(), integ.end(), rec.integrals.begin() + i * nG);
      }
    };
    record(0);
    for (long long step = 0; step < n_steps; ++step) {
      const double t = t_start + step * opts.dt;
      std::fill(dv.begin(), dv.end(), 0.0);
      if (drift) D.eval(t, z.data(), dv.data(), scratch.data());
      const std::uint32_t step_id = static_cast<std::uint32_t>(std::llround(t / opts.dt));
      if (opts.scheme == StepScheme::kEuler) {
        philox_normals(ens.seed, static_cast<std::uint64_t>(i), step_id, d, xi.data());
        for (int a = 0; a < N; ++a) {
          double bz = 0.0;
          for (int b = 0; b < N; ++b) bz += B(a, b) * z[b];
          zn[a] = z[a] + bz * opts.dt;
        }
        for (int a = 0; a < d; ++a) zn[a] += dv[a] * opts.dt + sq * xi[a];
      } else {
        philox_normals(ens.seed, static_cast<std::uint64_t>(i), step_id, N, xi.data());
        for (int a = 0; a < N; ++a) {
          double acc = 0.0;
          for (int b = 0; b < N; ++b) acc += expB(a, b) * z[b] + Lc(a, b) * xi[b];
          for (int b = 0; b < d; ++b) acc += Gd(a, b) * dv[b];
          zn[a] = acc;
        }
      }
      if (box) {
        for (int a = 0; a < N; ++a) {
          const double L = box->half_extent(a);
          if (zn[a] < -L || zn[a] >= L) {
            zn[a] = wrap_coordinate(zn[a], L);
            ++esc;
          }
        }
      }
      z.swap(zn);
      for (int j = 0; j < nG; ++j) {
        const double g_new = G[j](z.data());
        integ[j] += 0.5 * (g_old[j] + g_new) * opts.dt;
        g_old[j] = g_new;
      }
      record(step + 1);
    }
    std::copy(z.begin(), z.end(), ens.z.begin() + i * N);
    return esc;
  };

  const long long M = static_cast<long long>(ens.M);
  if (opts.exec == Exec::kParallel) {
#pragma omp parallel for schedule(static) reduction(+ : escapes)
    for (long long i = 0; i < M; ++i) escapes += run_particle(i);
  } else {
    for (long long i = 0; i < M; ++i) escapes += run_particle(i);
  }
  ens.escapes += escapes;
  ens.particle_steps += n_steps * M;
  ens.t = t_start + n_steps * opts.dt;
}

GridField bin_particles(const std::vector<double>& z, int N, const AnisoGrid& grid, Exec exec) {
  KMV_DEMAND(grid.dim() == N, "grid and particle dimensions differ");
  const std::size_t M = z.size() / N;
  KMV_DEMAND(M >= 1, "no particles to bin");
  const std::size_t S = grid.size();
  auto deposit = [&](std::size_t i, std::vector<double>& hist) {
    int base[6];
    double frac[6];
    for (int k = 0; k < N; ++k) {
      const double u = (wrap_coordinate(z[i * N + k], grid.half_extent(k)) +
                        grid.half_extent(k)) / grid.spacing(k);
      const double fl = std::floor(u);
      base[k] = static_cast<int>(fl) % grid.points(k);
      frac[k] = u - fl;
    }
    for (int corner = 0; corner < (1 << N); ++corner) {
      double w = 1.0;
      std::size_t p = 0;
      for (int k = 0; k < N; ++k) {
        const int bit = (corner >> k) & 1;
        w *= bit ? frac[k] : 1 - frac[k];
        p += static_cast<std::size_t>((base[k] + bit) % grid.points(k)) * grid.stride(k);
      }
      hist[p] += w;
    }
  };
  std::vector<double> hist(S, 0.0);
  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      std::vector<double> local(S, 0.0);
#pragma omp for schedule(static)
      for (long long i = 0; i < static_cast<long long>(M); ++i) deposit(i, local);
#pragma omp critical
      for (std::size_t p = 0; p < S; ++p) hist[p] += local[p];
    }
  } else {
    for (std::size_t i = 0; i < M; ++i) deposit(i, hist);
  }
  GridField out(grid, 1);
  const double scale = 1.0 / (static_cast<double>(M) * grid.cell_volume());
  for (std::size_t p = 0; p < S; ++p) out.at(p) = hist[p] * scale;
  return out;
}

GridField kde_density(const std::vector<double>& z, int N, const AnisoGrid& grid, Exec exec) {
  const std::size_t M = z.size() / N;
  GridField hist = bin_particles(z, N, grid, exec);
  const Eigen::MatrixXd C = ParticleEnsemble::covariance_of(z, N);
  const double factor = std::pow(4.0 / ((N + 2.0) * static_cast<double>(M)), 1.0 / (N + 4.0));
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N, N);
  for (int k = 0; k < N; ++k) {
    const double h = std::sqrt(std::max(C(k, k), 0.0)) * factor;
    H(k, k) = h * h;
  }
  Spectrum s = fft_forward(grid, hist.channel(0));
  const auto mult = gaussian_multiplier(grid, H);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= mult[i];
  GridField out(grid, 1);
  fft_inverse(grid, s.data(), out.channel(0));
  return out;
}

GridField kde_density(const ParticleEnsemble& ens, const AnisoGrid& grid) {
  return kde_density(ens.z, ens.N, grid);
}

double l1_distance(const GridField& a, const GridField& b) {
  KMV_DEMAND(a.grid() == b.grid(), "fields on different grids");
  double acc = 0.0;
  for (std::size_t p = 0; p < a.values().size(); ++p) acc += std::abs(a.values()[p] - b.values()[p]);
  return acc * a.grid().cell_volume();
}

TimeField frozen_drift(const TimeField& u, const TimeField& b, const NonlinearitySpec& nonlin) {
  const AnisoGrid& grid = u.grid();
  const int d = grid.blocks().d;
  std::vector<GridField> out;
  for (int i = 0; i < u.n_points(); ++i) {
    const GridField bi = b.at_time(u.time(i));
    GridField D(grid, d);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double f = nonlin.F(u[i].at(p));
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int j = 0; j < bi.channels(); ++j) acc += nonlin.K(c, j) * bi.at(p, j);
        D.at(p, c) = f * acc;
      }
    }
    out.push_back(std::move(D));
  }
  return TimeField(u.t0(), u.t1(), std::move(out));
}

MarginalReport validate_marginals(const KolmogorovModel& model, const TimeField& u,
                                  const TimeField& b, const NonlinearitySpec& nonlin,
                                  std::size_t M, std::uint64_t seed,
                                  const std::vector<double>& times, double dt,
                                  StepScheme scheme, int drift_upsample) {
  KMV_DEMAND(!times.empty(), "validate_marginals needs checkpoint times");
  const TimeField D = frozen_drift(u, b, nonlin);
  ParticleEnsemble ens = sample_initial(u[0], M, seed);
  SimulationOptions opts;
  opts.dt = dt;
  opts.scheme = scheme;
  opts.checkpoints = times;
  opts.drift_upsample = drift_upsample;
  simulate(ens, model, &D, *std::max_element(times.begin(), times.end()), opts);
  MarginalReport rep;
  rep.M = M;
  rep.escapes = ens.escapes;
  for (const auto& rec : ens.records) {
    rep.times.push_back(rec.t);
    rep.l1.push_back(l1_distance(kde_density(rec.z, ens.N, u.grid()), u.at_time(rec.t)));
  }
  return rep;
}

int martingale_h_count() { return 5; }

namespace {

const Checkpoint& find_record(const ParticleEnsemble& ens, double t) {
  for (const auto& r : ens.records) {
    if (std::abs(r.t - t) <= 0.5 * ens.dt + 1e-12) return r;
  }
  KMV_THROW(kInvalidArgument, "no trajectory record at t = " + std::to_string(t));
}

}  // namespace

MartingaleReport martingale_test(const KolmogorovModel& model, const TimeField& Bc,
                                 const ParticleEnsemble& ens, const std::vector<GridField>& g_list,
                                 const MartingaleOptions& opts) {
  KMV_DEMAND(!ens.records.empty(), "ensemble carries no trajectory records");
  KMV_DEMAND(!opts.pairs.empty(), "martingale test needs (s, t) pairs");
  const int N = ens.N;
  const std::size_t M = ens.M;
  const int nG = static_cast<int>(g_list.size());
  KMV_DEMAND(static_cast<int>(ens.records.front().integrals.size()) == static_cast<int>(M) * nG,
             "ensemble was not simulated with these integrands");
  const Checkpoint& first = ens.records.front();
  MartingaleReport rep;
  rep.M = M;
  for (int gi = 0; gi < nG; ++gi) {
    BackwardProblem bp;
    bp.model = model;
    bp.Bc = Bc;
    bp.g = TimeField::Constant(0.0, opts.T, 2, g_list[gi]);
    bp.ell = GridField(g_list[gi].grid(), 1);
    bp.lambda = 0.0;
    bp.beta = opts.beta;
    bp.epsilon = opts.epsilon;
    bp.T = opts.T;
    const BackwardSolution sol = solve_kolmogorov(bp, opts.backward);
    std::vector<PeriodicInterpolator> U;
    for (const auto& f : sol.u.fields()) U.emplace_back(upsample(f, opts.u_upsample));
    auto u_at = [&](double t, const double* z) {
      const int n = static_cast<int>(U.size());
      const double x = std::clamp((t - sol.u.t0()) / sol.u.dt(), 0.0, n - 1.0);
      const int i = std::min(static_cast<int>(std::floor(x)), n - 2);
      const double th = x - i;
      double v = (1 - th) * U[i](z);
      if (th > 0) v += th * U[i + 1](z);
      return v + opts.perturb * z[0] * z[0];
    };
    for (const auto& [s, t] : opts.pairs) {
      const Checkpoint& rs = find_record(ens, s);
      const Checkpoint& rt = find_record(ens, t);
      std::vector<double> dM(M);
#pragma omp parallel for schedule(static)
      for (long long i = 0; i < static_cast<long long>(M); ++i) {
        dM[i] = u_at(rt.t, rt.z.data() + i * N) - u_at(rs.t, rs.z.data() + i * N) -
                (rt.integrals[i * nG + gi] - rs.integrals[i * nG + gi]);
      }
      for (int h = 0; h < martingale_h_count(); ++h) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
          const double v1 = first.z[i * N], x1 = first.z[i * N + N - 1];
          const double vs = rs.z[i * N];
          double hv = 1.0;
          switch (h) {
            case 0: hv = 1.0; break;
            case 1: hv = std::tanh(v1); break;
            case 2: hv = std::tanh(x1); break;
            case 3: hv = std::tanh(vs) * std::tanh(x1); break;
            default: hv = std::tanh(v1) * std::tanh(vs); break;
          }
          const double y = dM[i] * hv;
          sum += y;
          sum2 += y * y;
        }
        MartingaleRow row;
        row.g_id = gi;
        row.h_id = h;
        row.s = rs.t;
        row.t = rt.t;
        row.mean = sum / M;
        const double var = std::max(sum2 / M - row.mean * row.mean, 0.0) * M / (M - 1.0);
        row.std_error = std::sqrt(var / M);
        row.z = row.std_error > 0 ? row.mean / row.std_error : 0.0;
        row.pass = std::abs(row.z) <= opts.threshold;
        if (!row.pass) ++rep.failures;
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(row.z));
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

void write_martingale_csv(const std::string& path, const MartingaleReport& r) {
  std::ofstream os(path);
  if (!os) KMV_THROW(kIoError, "cannot write " + path);
  os.precision(17);
  os << "g_id,h_id,s,t,mean,std_error,z,pass\n";
  for (const auto& w : r.rows) {
    os << w.g_id << ',' << w.h_id << ',' << w.s << ',' << w.t << ',' << w.mean << ','
       << w.std_error << ',' << w.z << ',' << (w.pass ? 1 : 0) << '\n';
  }
}

void write_trajectories(const std::string& path, const ParticleEnsemble& ens) {
  nlohmann::json h;
  h["M"] = ens.M;
  h["N"] = ens.N;
  h["seed"] = ens.seed;
  h["dt"] = ens.dt;
  std::vector<double> times;
  for (const auto& c : ens.records) times.push_back(c.t);
  h["checkpoint_times"] = times;
  h["integrands"] = ens.records.empty() ? 0 : ens.records.front().integrals.size() / std::max<std::size_t>(ens.M, 1);
  std::ofstream out(path, std::ios::binary);
  if (!out) KMV_THROW(kIoError, "cannot open " + path);
  out << h.dump() << '\n';
  for (const auto& c : ens.records) {
    out.write(reinterpret_cast<const char*>(c.z.data()), static_cast<std::streamsize>(c.z.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(c.integrals.data()),
              static_cast<std::streamsize>(c.integrals.size() * sizeof(double)));
  }
  if (!out) KMV_THROW(kIoError, "write failed for " + path);
}

ParticleEnsemble read_trajectories(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) KMV_THROW(kIoError, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    KMV_THROW(kIoError, path + ": bad header: " + e.what());
  }
  ParticleEnsemble ens;
  ens.M = h.at("M").get<std::size_t>();
  ens.N = h.at("N").get<int>();
  ens.seed = h.at("seed").get<std::uint64_t>();
  ens.dt = h.at("dt").get<double>();
  const auto q = h.at("integrands").get<std::size_t>();
  for (double t : h.at("checkpoint_times").get<std::vector<double>>()) {
    Checkpoint c;
    c.t = t;
    c.z.resize(ens.M * ens.N);
    c.integrals.resize(ens.M * q);
    in.read(reinterpret_cast<char*>(c.z.data()), static_cast<std::streamsize>(c.z.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(c.integrals.data()),
            static_cast<std::streamsize>(c.integrals.size() * sizeof(double)));
    if (!in) KMV_THROW(kIoError, path + ": truncated data");
    ens.records.push_back(std::move(c));
  }
  if (!ens.records.empty()) {
    ens.z = ens.records.back().z;
    ens.t = ens.records.back().t;
  }
  return ens;
}

}  // namespace kmv

