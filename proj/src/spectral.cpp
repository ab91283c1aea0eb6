#include "kmv/spectral.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <map>
#include <numeric>
#include <mutex>
#include <random>
#include <tuple>


#include "kmv/error.hpp"

namespace kmv {

namespace {

constexpr double kPi = 3.141592653589793;

double h_step(double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; }

double smooth_window(double s, double flat, double zero) {
  const double y = std::clamp((zero - std::abs(s)) / (zero - flat), 0.0, 1.0);
  const double a = h_step(y);
  const double b = h_step(1.0 - y);
  return a / (a + b);
}

using GridKey = std::tuple<std::vector<int>, std::vector<double>, std::vector<int>>;

GridKey key_of(const AnisoGrid& g) {
  return {g.blocks().dims, g.half_extents(), g.points()};
}

double sup_abs(const double* v, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(v[i]));
  return m;
}

Spectrum multiply(const Spectrum& s, const std::vector<double>& m) {
  Spectrum out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * m[i];
  return out;
}

}  // namespace

double lp_chi(double s) {
  const double a = h_step((2.0 / 3.0 - s) * 6.0);
  const double b = h_step((s - 0.5) * 6.0);
  return a / (a + b);
}

Partition::Partition(const AnisoGrid& grid) : J_max_(grid.J_max()) {
  const auto& nb = grid.spectral_norm();
  const std::size_t S = grid.spectral_size();
  rows_.assign(J_max_ + 2, std::vector<double>(S, 0.0));
  // lower[j + 1][s] = rho_{-1}(2^{-j} . xi) = chi(|xi|_B / 2^j).
  std::vector<double> prev(S), next(S);
  for (std::size_t s = 0; s < S; ++s) prev[s] = lp_chi(nb[s]);
  rows_[0] = prev;
  for (int j = 0; j < J_max_; ++j) {
    const double scale = std::ldexp(1.0, -(j + 1));
    for (std::size_t s = 0; s < S; ++s) {
      next[s] = lp_chi(nb[s] * scale);
      rows_[j + 1][s] = next[s] - prev[s];
    }
    std::swap(prev, next);
  }
  for (std::size_t s = 0; s < S; ++s) rows_[J_max_ + 1][s] = 1.0 - prev[s];
}

std::shared_ptr<const Partition> build_partition(const AnisoGrid& grid) {
  if (grid.J_max() < 2) {
    KMV_THROW(kGridTooCoarse, "grid resolves J_max = " + std::to_string(grid.J_max()) +
                                  " < 2 Littlewood-Paley levels");
  }
  static std::mutex mu;
  static std::map<GridKey, std::shared_ptr<const Partition>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = key_of(grid);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 16) cache.clear();
  auto p = std::make_shared<const Partition>(grid);
  cache.emplace(std::move(key), p);
  return p;
}

std::vector<double> block_sup_norms(const AnisoGrid& grid, const Spectrum& spec, Exec exec) {
  auto part = build_partition(grid);
  const int nb = part->J_max() + 2;
  std::vector<double> out(nb, 0.0);
  auto one = [&](int b, std::vector<double>& buf) {
    Spectrum tmp = multiply(spec, part->row(b - 1));
    fft_inverse(grid, tmp.data(), buf.data());
    out[b] = sup_abs(buf.data(), buf.size());
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      std::vector<double> buf(grid.size());
#pragma omp for schedule(dynamic)
      for (int b = 0; b < nb; ++b) one(b, buf);
    }
  } else {
    std::vector<double> buf(grid.size());
    for (int b = 0; b < nb; ++b) one(b, buf);
  }
  return out;
}

std::vector<double> block_sup_norms(const GridField& f, Exec exec) {
  std::vector<double> out;
  for (int c = 0; c < f.channels(); ++c) {
    auto n = block_sup_norms(f.grid(), fft_forward(f.grid(), f.channel(c)), exec);
    if (out.empty()) out = n;
    for (std::size_t j = 0; j < n.size(); ++j) out[j] = std::max(out[j], n[j]);
  }
  return out;
}

double besov_from_blocks(const std::vector<double>& sup_norms, double gamma) {
  double m = 0.0;
  for (std::size_t b = 0; b < sup_norms.size(); ++b) {
    const int j = static_cast<int>(b) - 1;
    m = std::max(m, std::exp2(j * gamma) * sup_norms[b]);
  }
  return m;
}

double besov_norm(const GridField& f, double gamma, Exec exec) {
  return besov_from_blocks(block_sup_norms(f, exec), gamma);
}

LPDecomposition lp_decompose(const GridField& f, Exec exec) {
  const AnisoGrid& grid = f.grid();
  auto part = build_partition(grid);
  LPDecomposition out;
  out.source = f;
  out.J_max = part->J_max();
  const int nb = out.J_max + 2;
  out.blocks.assign(nb, GridField(grid, f.channels()));
  std::vector<Spectrum> spec(f.channels());
  for (int c = 0; c < f.channels(); ++c) spec[c] = fft_forward(grid, f.channel(c));
  auto one = [&](int b) {
    for (int c = 0; c < f.channels(); ++c) {
      Spectrum tmp = multiply(spec[c], part->row(b - 1));
      fft_inverse(grid, tmp.data(), out.blocks[b].channel(c));
    }
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < nb; ++b) one(b);
  } else {
    for (int b = 0; b < nb; ++b) one(b);
  }
  out.sup_norms.resize(nb);
  for (int b = 0; b < nb; ++b) out.sup_norms[b] = out.blocks[b].sup_norm();
  return out;
}

double LPDecomposition::besov_norm(double gamma) const {
  return besov_from_blocks(sup_norms, gamma);
}

GridField LPDecomposition::reconstruct() const {
  GridField sum(source.grid(), source.channels());
  for (const auto& b : blocks) sum += b;
  return sum;
}

ProductResult bony_product(const GridField& f, const GridField& g, double alpha,
                           double gamma) {
  if (!(alpha + gamma > 0)) {
    KMV_THROW(kRegularityError, "product needs alpha + gamma > 0");
  }
  KMV_DEMAND(f.grid() == g.grid(), "product operands live on different grids");
  KMV_DEMAND(g.channels() == 1 || g.channels() == f.channels(),
             "channel counts do not broadcast");
  ProductResult out{f, 0.0};
  for (int c = 0; c < f.channels(); ++c) {
    const double* gv = g.channel(g.channels() == 1 ? 0 : c);
    double* pv = out.product.channel(c);
    for (std::size_t p = 0; p < f.size(); ++p) pv[p] *= gv[p];
  }
  const double nf = besov_norm(f, alpha);
  const double ng = besov_norm(g, gamma);
  const double np = besov_norm(out.product, std::min(alpha, gamma));
  out.ratio = (nf > 0 && ng > 0) ? np / (nf * ng) : 0.0;
  return out;
}

double bump_hat(double omega) {
  // The bump is flat to all orders at +-1, so the trapezoid rule converges
  // faster than any power; 1024 panels sit at round-off.
  constexpr int kPanels = 1024;
  static const std::vector<double> samples = [] {
    std::vector<double> w(kPanels + 1, 0.0);
    for (int i = 1; i < kPanels; ++i) {
      const double s = -1.0 + 2.0 * i / kPanels;
      w[i] = std::exp(-1.0 / (1.0 - s * s));
    }
    return w;
  }();
  static const double mass = std::accumulate(samples.begin(), samples.end(), 0.0);
  double acc = 0;
  for (int i = 1; i < kPanels; ++i) acc += samples[i] * std::cos(omega * (-1.0 + 2.0 * i / kPanels));
  return acc / mass;
}

namespace {

std::vector<double> mollifier_multiplier(const AnisoGrid& grid, double n, double radius) {
  KMV_DEMAND(n >= 1, "mollification index must be >= 1");
  KMV_DEMAND(radius > 0, "mollifier radius must be positive");
  const int N = grid.dim();
  // Per-axis multiplier tables, indexed by the signed integer frequency.
  std::vector<std::map<long long, double>> tables(N);
  std::vector<double> mult(grid.spectral_size(), 1.0);
  for (int k = 0; k < N; ++k) {
    const auto& xi = grid.spectral_freq(k);
    const double unit = kPi / grid.half_extent(k);
    for (std::size_t s = 0; s < xi.size(); ++s) {
      const long long m = std::llround(xi[s] / unit);
      auto it = tables[k].find(m);
      if (it == tables[k].end()) {
        it = tables[k].emplace(m, bump_hat(xi[s] * radius / n)).first;
      }
      mult[s] *= it->second;
    }
  }
  return mult;
}

GridField convolve(const GridField& f, const std::vector<double>& mult) {
  const AnisoGrid& grid = f.grid();
  GridField out(grid, f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    Spectrum s = multiply(fft_forward(grid, f.channel(c)), mult);
    fft_inverse(grid, s.data(), out.channel(c));
  }
  return out;
}

}  // namespace

GridField mollify(const GridField& f, double n, double radius) {
  return convolve(f, mollifier_multiplier(f.grid(), n, radius));
}

TimeField mollify(const TimeField& f, double n, double radius) {
  const auto mult = mollifier_multiplier(f.grid(), n, radius);
  std::vector<GridField> out;
  out.reserve(f.n_points());
  for (const auto& g : f.fields()) out.push_back(convolve(g, mult));
  return TimeField(f.t0(), f.t1(), std::move(out));
}

GridField synthesize_besov_field(double beta, std::uint64_t seed, const AnisoGrid& grid,
                                 int channels, const SynthesisOptions& opts) {
  const int N = grid.dim();
  const int J = opts.max_level < 0 ? grid.J_max() : std::min(opts.max_level, grid.J_max());
  // Candidate lattice points in a resolution-independent order (by signed
  // integer frequency), Nyquist indices excluded.
  struct Cand {
    std::vector<long long> m;
    std::size_t s;
    double log_norm;
  };
  std::vector<Cand> cands;
  const auto& nyq = grid.spectral_nyquist();
  const auto& nb = grid.spectral_norm();
  for (std::size_t s = 0; s < grid.spectral_size(); ++s) {
    if (nyq[s] || nb[s] <= 0) continue;
    Cand c{std::vector<long long>(N), s, std::log2(nb[s])};
    for (int k = 0; k < N; ++k) {
      c.m[k] = std::llround(grid.spectral_freq(k)[s] * grid.half_extent(k) / kPi);
    }
    cands.push_back(std::move(c));
  }
  std::sort(cands.begin(), cands.end(),
            [](const Cand& a, const Cand& b) { return a.m < b.m; });

  std::vector<double> window(grid.size(), 1.0);
  if (opts.window) {
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const Eigen::VectorXd z = grid.point(p);
      double w = 1.0;
      for (int k = 0; k + 1 < N; ++k) {
        w *= smooth_window(z(k) / grid.half_extent(k), opts.window_flat, opts.window_zero);
      }
      window[p] = w;
    }
  }

  GridField out(grid, channels);
  std::vector<double> phase_base(grid.size());
  for (int c = 0; c < channels; ++c) {
    for (int j = 0; j <= J; ++j) {
      std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(j)};
      std::mt19937_64 rng(sq);
      std::vector<const Cand*> pool;
      for (const auto& cd : cands) {
        if (std::abs(cd.log_norm - j) < 0.1) pool.push_back(&cd);
      }
      if (pool.empty()) {
        double best = 1e300;
        for (const auto& cd : cands) best = std::min(best, std::abs(cd.log_norm - j));
        for (const auto& cd : cands) {
          if (std::abs(cd.log_norm - j) == best) pool.push_back(&cd);
        }
      }
      if (pool.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const Cand& chosen = *pool[pick(rng)];
      const double theta = std::uniform_real_distribution<double>(0.0, 2 * kPi)(rng);
      const double amp = opts.amplitude * std::exp2(j * beta);
      double* v = out.channel(c);
      for (std::size_t p = 0; p < grid.size(); ++p) {
        double arg = theta;
        for (int k = 0; k < N; ++k) {
          const int i = static_cast<int>((p / grid.stride(k)) % grid.points(k));
          arg += grid.spectral_freq(k)[chosen.s] * grid.coord(k, i);
        }
        v[p] += amp * std::cos(arg);
      }
    }
    double* v = out.channel(c);
    for (std::size_t p = 0; p < grid.size(); ++p) v[p] *= window[p];
  }
  return out;
}

TimeField synthesize_besov_field(double beta, std::uint64_t seed, const AnisoGrid& grid,
                                 int channels, double T, int n_points,
                                 const SynthesisOptions& opts) {
  KMV_DEMAND(T > 0 && n_points >= 2, "time mesh needs T > 0 and >= 2 points");
  const GridField b = synthesize_besov_field(beta, seed, grid, channels, opts);
  std::vector<GridField> fields;
  fields.reserve(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double t = T * i / (n_points - 1);
    fields.push_back((1.0 + 0.5 * std::sin(2 * kPi * t / T)) * b);
  }
  return TimeField(0.0, T, std::move(fields));
}

double holder_norm_aniso(const GridField& f, double gamma, std::uint64_t seed, int n_pairs) {
  KMV_DEMAND(gamma > 0 && gamma <= 1, "Holder index must lie in (0, 1]");
  const AnisoGrid& grid = f.grid();
  const int N = grid.dim();
  std::vector<int> reach(N);
  for (int k = 0; k < N; ++k) {
    reach[k] = std::min(grid.points(k) / 2, static_cast<int>(std::floor(1.0 / grid.spacing(k))));
  }
  const BlockStructure& bs = grid.blocks();
  auto offset_norm = [&](const std::vector<int>& o) {
    Eigen::VectorXd h(N);
    for (int k = 0; k < N; ++k) h(k) = o[k] * grid.spacing(k);
    return aniso_norm(h, bs);
  };
  auto shifted = [&](std::size_t p, const std::vector<int>& o) {
    std::size_t q = 0;
    for (int k = 0; k < N; ++k) {
      const int i = static_cast<int>((p / grid.stride(k)) % grid.points(k));
      const int n = grid.points(k);
      q += static_cast<std::size_t>(((i + o[k]) % n + n) % n) * grid.stride(k);
    }
    return q;
  };
  double semi = 0.0;
  auto probe = [&](std::size_t p, const std::vector<int>& o, double hn) {
    const double w = std::pow(hn, -gamma);
    const std::size_t q = shifted(p, o);
    for (int c = 0; c < f.channels(); ++c) {
      semi = std::max(semi, std::abs(f.at(q, c) - f.at(p, c)) * w);
    }
  };
  // Axis-aligned nearest neighbours.
  for (int k = 0; k < N; ++k) {
    std::vector<int> o(N, 0);
    o[k] = 1;
    const double hn = offset_norm(o);
    if (hn > 1.0) continue;
    for (std::size_t p = 0; p < grid.size(); ++p) probe(p, o, hn);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_p(0, grid.size() - 1);
  std::vector<int> o(N);
  int done = 0;
  for (int attempt = 0; done < n_pairs && attempt < 20 * n_pairs; ++attempt) {
    bool zero = true;
    for (int k = 0; k < N; ++k) {
      o[k] = std::uniform_int_distribution<int>(-reach[k], reach[k])(rng);
      zero = zero && o[k] == 0;
    }
    if (zero) continue;
    const double hn = offset_norm(o);
    if (hn > 1.0) continue;
    probe(pick_p(rng), o, hn);
    ++done;
  }
  return f.sup_norm() + semi;
}

namespace {

GridField spectral_multiply(const GridField& f, int channel,
                            const std::function<cplx(std::size_t)>& m) {
  const AnisoGrid& grid = f.grid();
  Spectrum s = fft_forward(grid, f.channel(channel));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= m(i);
  GridField out(grid, 1);
  fft_inverse(grid, s.data(), out.channel(0));
  return out;
}

cplx derivative_symbol(const AnisoGrid& grid, int axis, std::size_t s) {
  const double xi = grid.spectral_freq(axis)[s];
  if (std::abs(xi) >= grid.nyquist(axis) * (1 - 1e-12)) return 0.0;
  return cplx(0.0, xi);
}

}  // namespace

GridField spectral_derivative(const GridField& f, int axis) {
  KMV_DEMAND(axis >= 0 && axis < f.grid().dim(), "derivative axis out of range");
  GridField out(f.grid(), f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    GridField one = spectral_multiply(
        f, c, [&](std::size_t s) { return derivative_symbol(f.grid(), axis, s); });
    std::copy(one.channel(0), one.channel(0) + f.size(), out.channel(c));
  }
  return out;
}

GridField divergence_v(const GridField& G) {
  const AnisoGrid& grid = G.grid();
  const int d = grid.blocks().d;
  KMV_DEMAND(G.channels() == d, "divergence_v needs d channels");
  Spectrum acc(grid.spectral_size(), 0.0);
  for (int k = 0; k < d; ++k) {
    Spectrum s = fft_forward(grid, G.channel(k));
    for (std::size_t i = 0; i < s.size(); ++i) acc[i] += derivative_symbol(grid, k, i) * s[i];
  }
  GridField out(grid, 1);
  fft_inverse(grid, acc.data(), out.channel(0));
  return out;
}

GridField gradient_v(const GridField& f) {
  const AnisoGrid& grid = f.grid();
  const int d = grid.blocks().d;
  KMV_DEMAND(f.channels() == 1, "gradient_v needs a scalar field");
  const Spectrum s = fft_forward(grid, f.channel(0));
  GridField out(grid, d);
  for (int k = 0; k < d; ++k) {
    Spectrum t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = derivative_symbol(grid, k, i) * s[i];
    fft_inverse(grid, t.data(), out.channel(k));
  }
  return out;
}

GridField laplacian_v(const GridField& f) {
  const AnisoGrid& grid = f.grid();
  const int d = grid.blocks().d;
  GridField out(grid, f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    Spectrum s = fft_forward(grid, f.channel(c));
    for (std::size_t i = 0; i < s.size(); ++i) {
      double m = 0.0;
      for (int k = 0; k < d; ++k) m -= grid.spectral_freq(k)[i] * grid.spectral_freq(k)[i];
      s[i] *= m;
    }
    fft_inverse(grid, s.data(), out.channel(c));
  }
  return out;
}

GridField grid_impulse(const AnisoGrid& grid) {
  GridField f(grid, 1);
  std::size_t p = 0;
  for (int k = 0; k < grid.dim(); ++k) p += grid.stride(k) * (grid.points(k) / 2);
  f.at(p) = 1.0;
  return f;
}

BernsteinReport bernstein_exponents(const GridField& f) {
  KMV_DEMAND(f.channels() == 1, "bernstein_exponents needs a scalar field");
  const AnisoGrid& grid = f.grid();
  BernsteinReport rep;
  rep.J_max = grid.J_max();
  if (rep.J_max < 3)
    KMV_THROW(kGridTooCoarse, "Bernstein fit needs J_max >= 3, grid has " + std::to_string(rep.J_max));
  const std::vector<double> base = block_sup_norms(f);
  for (int k = 0; k < grid.dim(); ++k) {
    const std::vector<double> dk = block_sup_norms(spectral_derivative(f, k));
    std::vector<double> gain(dk.size(), 0.0);
    for (std::size_t j = 0; j < dk.size(); ++j) gain[j] = base[j] > 0 ? dk[j] / base[j] : 0.0;
    // least squares of log2 gain against j over 1..J_max-1
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = rep.J_max - 1;
    for (int j = 1; j < rep.J_max; ++j) {
      if (!(gain[j + 1] > 0)) KMV_THROW(kGridTooCoarse, "empty Littlewood-Paley block " + std::to_string(j));
      const double y = std::log2(gain[j + 1]);
      sx += j; sy += y; sxx += double(j) * j; sxy += j * y;
    }
    rep.exponent.push_back((n * sxy - sx * sy) / (n * sxx - sx * sx));
    rep.gain.push_back(std::move(gain));
  }
  return rep;
}

}  // namespace kmv
