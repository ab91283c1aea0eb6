#include "kmv/duhamel.hpp"

#include <cmath>
#include <variant>

#include "kmv/error.hpp"
#include "kmv/fft.hpp"
#include "kmv/semigroup.hpp"

namespace kmv {

QuadratureRule parse_quadrature_rule(const std::string& name) {
  if (name == "exponential") return QuadratureRule::kExponential;
  if (name == "product-frozen") return QuadratureRule::kProductFrozen;
  if (name == "product-linear") return QuadratureRule::kProductLinear;
  KMV_THROW(kConfigError, "unknown quadrature rule '" + name +
                              "' (expected exponential, product-frozen or product-linear)");
}

std::string to_string(QuadratureRule rule) {
  switch (rule) {
    case QuadratureRule::kExponential: return "exponential";
    case QuadratureRule::kProductFrozen: return "product-frozen";
    case QuadratureRule::kProductLinear: return "product-linear";
  }
  return "?";
}

namespace {

// 3-point Gauss-Legendre on [-1, 1].
constexpr double kGL3x[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
constexpr double kGL3w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

// A quadrature node s whose multiplier value is distributed onto mesh nodes
// k and k + 1 with weights wl and wr.
struct Term {
  double s;
  int k;
  double wl;
  double wr;
};

void add_panel(std::vector<Term>& out, double lo, double hi, double s_left, double h, int k) {
  for (int q = 0; q < 3; ++q) {
    const double s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * kGL3x[q];
    const double w = 0.5 * (hi - lo) * kGL3w[q];
    const double theta = (s - s_left) / h;
    out.push_back({s, k, w * (1 - theta), w * theta});
  }
}

}  // namespace

struct Duhamel::Cache {
  // Either double or float storage per row, flattened [k][s].
  std::vector<std::variant<std::vector<double>, std::vector<float>>> rows;
};

Duhamel::Duhamel(KolmogorovModel model, AnisoGrid grid, double t0, double t1, int n_points,
                 Direction direction, DuhamelOptions options)
    : model_(std::move(model)),
      grid_(std::move(grid)),
      t0_(t0),
      t1_(t1),
      n_points_(n_points),
      direction_(direction),
      opt_(options) {
  KMV_DEMAND(n_points >= 2 && t1 > t0, "Duhamel mesh needs >= 2 points on a nonempty interval");
  work_ = shear_padded_grid(model_, grid_, std::max(std::abs(t0), std::abs(t1)));
  up_ = SpectralResampler(grid_, work_);
  down_ = SpectralResampler(work_, grid_);
  if (opt_.rule != QuadratureRule::kExponential && !(opt_.kappa < 1.0)) {
    KMV_THROW(kQuadratureError, "singular exponent kappa = " + std::to_string(opt_.kappa) +
                                    " is not integrable");
  }
  const double S = static_cast<double>(work_.spectral_size());
  const double pairs = 0.5 * n_points_ * (n_points_ + 1.0);
  const double need_double = pairs * S * sizeof(double);
  const double need_float = pairs * S * sizeof(float);
  if (need_float > opt_.cache_bytes) return;
  const bool use_double = need_double <= opt_.cache_bytes;
  auto cache = std::make_unique<Cache>();
  cache->rows.resize(n_points_);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_points_; ++i) {
    Row r = compute_row(i);
    const std::size_t count = r.c.size();
    if (use_double) {
      std::vector<double> flat(count * work_.spectral_size());
      for (std::size_t k = 0; k < count; ++k) {
        std::copy(r.c[k].begin(), r.c[k].end(), flat.begin() + k * work_.spectral_size());
      }
      cache->rows[i] = std::move(flat);
    } else {
      std::vector<float> flat(count * work_.spectral_size());
      for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t s = 0; s < r.c[k].size(); ++s) {
          flat[k * work_.spectral_size() + s] = static_cast<float>(r.c[k][s]);
        }
      }
      cache->rows[i] = std::move(flat);
    }
  }
  cache_ = std::move(cache);
}

Duhamel::~Duhamel() = default;
Duhamel::Duhamel(Duhamel&&) noexcept = default;
Duhamel& Duhamel::operator=(Duhamel&&) noexcept = default;

bool Duhamel::weights_cached() const { return cache_ != nullptr; }

Duhamel::Row Duhamel::compute_row(int i) const {
  const int n = n_points_;
  const double h = (t1_ - t0_) / (n - 1);
  const double t = time(i);
  const bool fwd = direction_ == Direction::kForward;
  const double kappa = opt_.kappa;
  const double trB = model_.trace();
  const double lambda = opt_.lambda;
  const int N = model_.N();

  Row row;
  row.k_begin = fwd ? 0 : i;
  const int k_end = fwd ? i : n - 1;  // inclusive
  const std::size_t S = work_.spectral_size();
  row.c.assign(k_end - row.k_begin + 1, std::vector<double>(S, 0.0));

  std::vector<Term> terms;
  if (opt_.rule == QuadratureRule::kExponential) {
    for (int k = row.k_begin; k < k_end; ++k) {
      const double a = time(k);
      const double b = time(k + 1);
      const bool touches = fwd ? (k + 1 == i) : (k == i);
      if (!touches) {
        add_panel(terms, a, b, a, h, k);
        continue;
      }
      const int P = std::max(1, opt_.graded_panels);
      for (int p = 0; p < P; ++p) {
        // Panels shrink geometrically toward the diagonal s = t.
        const double f_hi = std::ldexp(1.0, -p);
        const double f_lo = p + 1 < P ? std::ldexp(1.0, -(p + 1)) : 0.0;
        if (fwd) {
          add_panel(terms, b - (b - a) * f_hi, b - (b - a) * f_lo, a, h, k);
        } else {
          add_panel(terms, a + (b - a) * f_lo, a + (b - a) * f_hi, a, h, k);
        }
      }
    }
  } else {
    // tau = |t - s| over each interval, [lo, hi].
    auto I0 = [&](double lo, double hi) {
      return (std::pow(hi, 1 - kappa) - std::pow(lo, 1 - kappa)) / (1 - kappa);
    };
    auto I1 = [&](double lo, double hi) {
      return (std::pow(hi, 2 - kappa) - std::pow(lo, 2 - kappa)) / (2 - kappa);
    };
    std::vector<double> omega(k_end - row.k_begin + 1, 0.0);
    for (int k = row.k_begin; k < k_end; ++k) {
      const double lo = fwd ? t - time(k + 1) : time(k) - t;
      const double hi = fwd ? t - time(k) : time(k + 1) - t;
      // Mesh node farther from / nearer to the diagonal.
      const int far = fwd ? k : k + 1;
      const int near = fwd ? k + 1 : k;
      if (opt_.rule == QuadratureRule::kProductFrozen) {
        omega[far - row.k_begin] += I0(lo, hi);
      } else {
        omega[far - row.k_begin] += (I1(lo, hi) - lo * I0(lo, hi)) / h;
        omega[near - row.k_begin] += (hi * I0(lo, hi) - I1(lo, hi)) / h;
      }
    }
    for (int k = row.k_begin; k <= k_end; ++k) {
      const double tau = std::abs(t - time(k));
      const double w = omega[k - row.k_begin] * std::pow(tau, kappa);
      if (w != 0.0) terms.push_back({time(k), k, w, 0.0});
    }
  }

  std::vector<const std::vector<double>*> xi(N);
  for (int a = 0; a < N; ++a) xi[a] = &work_.spectral_freq(a);
  const Eigen::MatrixXd Rt = matrix_exp(model_.B.transpose(), -t);
  for (const Term& term : terms) {
    const double tau = std::abs(t - term.s);
    Eigen::MatrixXd M;
    double factor;
    if (fwd) {
      M = Rt.transpose() * covariance_unchecked(model_, tau) * Rt;
      factor = std::exp(-tau * trB);
    } else {
      const Eigen::MatrixXd Rs = matrix_exp(model_.B.transpose(), -term.s);
      M = Rs.transpose() * covariance_unchecked(model_, tau) * Rs;
      factor = std::exp(-lambda * tau);
    }
    std::vector<double>& cl = row.c[term.k - row.k_begin];
    std::vector<double>* cr =
        term.wr != 0.0 ? &row.c[term.k + 1 - row.k_begin] : nullptr;
    const double wl = term.wl * factor;
    const double wr = term.wr * factor;
    for (std::size_t s = 0; s < S; ++s) {
      double q = 0.0;
      for (int a = 0; a < N; ++a) {
        const double xa = (*xi[a])[s];
        q += M(a, a) * xa * xa;
        for (int b = a + 1; b < N; ++b) q += 2.0 * M(a, b) * xa * (*xi[b])[s];
      }
      const double m = std::exp(-0.5 * q);
      cl[s] += wl * m;
      if (cr) (*cr)[s] += wr * m;
    }
  }
  return row;
}

std::vector<GridField> Duhamel::integrate(const std::vector<GridField>& data, Exec exec) const {
  KMV_DEMAND(static_cast<int>(data.size()) == n_points_, "Duhamel data has wrong length");
  const int n = n_points_;
  const std::size_t S = work_.spectral_size();
  const bool fwd = direction_ == Direction::kForward;

  for (const auto& d : data) {
    KMV_DEMAND(d.channels() == 1 && d.grid() == grid_, "Duhamel data mismatch");
  }
  // Comoving spectra E_k = FFT(D_k o e^{s_k B}).
  std::vector<Spectrum> E(n);
  std::vector<Warp> warps(n);
  for (int k = 0; k < n; ++k) warps[k] = Warp(work_, matrix_exp(model_.B, time(k)));
  auto prep = [&](int k, std::vector<double>& buf) {
    up_.apply(data[k].channel(0), buf.data());
    warps[k].apply(buf.data(), buf.data(), Exec::kSerial);
    E[k] = fft_forward(work_, buf.data());
  };

  std::vector<GridField> out(n, GridField(grid_, 1));
  auto finish = [&](int i, Spectrum& acc, std::vector<double>& buf) {
    fft_inverse(work_, acc.data(), buf.data());
    const Warp back(work_, matrix_exp(model_.B, -time(i)));
    back.apply(buf.data(), buf.data(), Exec::kSerial);
    down_.apply(buf.data(), out[i].channel(0));
  };
  auto accumulate_row = [&](int i, Spectrum& acc) {
    std::fill(acc.begin(), acc.end(), cplx(0.0));
    const int kb = fwd ? 0 : i;
    const int ke = fwd ? i : n - 1;
    if (cache_) {
      const auto& v = cache_->rows[i];
      for (int k = kb; k <= ke; ++k) {
        const std::size_t off = static_cast<std::size_t>(k - kb) * S;
        const cplx* e = E[k].data();
        if (const auto* d = std::get_if<std::vector<double>>(&v)) {
          const double* c = d->data() + off;
          for (std::size_t s = 0; s < S; ++s) acc[s] += c[s] * e[s];
        } else {
          const float* c = std::get<std::vector<float>>(v).data() + off;
          for (std::size_t s = 0; s < S; ++s) acc[s] += static_cast<double>(c[s]) * e[s];
        }
      }
    } else {
      const Row r = compute_row(i);
      for (int k = kb; k <= ke; ++k) {
        const std::vector<double>& c = r.c[k - kb];
        const cplx* e = E[k].data();
        for (std::size_t s = 0; s < S; ++s) acc[s] += c[s] * e[s];
      }
    }
  };

  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      std::vector<double> buf(work_.size());
      Spectrum acc(S);
#pragma omp for schedule(static)
      for (int k = 0; k < n; ++k) prep(k, buf);
#pragma omp for schedule(dynamic)
      for (int i = 0; i < n; ++i) {
        accumulate_row(i, acc);
        finish(i, acc, buf);
      }
    }
  } else {
    std::vector<double> buf(work_.size());
    Spectrum acc(S);
    for (int k = 0; k < n; ++k) prep(k, buf);
    for (int i = 0; i < n; ++i) {
      accumulate_row(i, acc);
      finish(i, acc, buf);
    }
  }
  return out;
}

}  // namespace kmv
