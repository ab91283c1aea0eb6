#include "kmv/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "kmv/error.hpp"
#include "kmv/kolmogorov.hpp"
#include "kmv/spectral.hpp"

#ifndef KMV_PRESET_DIR
#define KMV_PRESET_DIR "presets"
#endif

namespace kmv {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kDriftBudgetBytes = 2e9;

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  KMV_THROW(kConfigError, key + ": " + what);
}

std::vector<std::string> split_list(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

double parse_double(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size() || !std::isfinite(v)) config_error(key, "expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) config_error(key, "expected an integer, got '" + s + "'");
  return v;
}

template <class T>
T parse_value(const std::string& s, const std::string& key);

template <>
double parse_value<double>(const std::string& s, const std::string& key) { return parse_double(s, key); }
template <>
int parse_value<int>(const std::string& s, const std::string& key) {
  return static_cast<int>(parse_int(s, key));
}
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed and counts share one parser");
template <>
std::size_t parse_value<std::size_t>(const std::string& s, const std::string& key) {
  const long long v = parse_int(s, key);
  if (v < 0) config_error(key, "must be nonnegative");
  return static_cast<std::size_t>(v);
}
template <>
bool parse_value<bool>(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  config_error(key, "expected true/false, got '" + s + "'");
}
template <>
std::string parse_value<std::string>(const std::string& s, const std::string&) { return s; }
template <>
std::vector<int> parse_value<std::vector<int>>(const std::string& s, const std::string& key) {
  std::vector<int> v;
  for (const auto& w : split_list(s)) v.push_back(static_cast<int>(parse_int(w, key)));
  return v;
}
template <>
std::vector<double> parse_value<std::vector<double>>(const std::string& s, const std::string& key) {
  std::vector<double> v;
  for (const auto& w : split_list(s)) v.push_back(parse_double(w, key));
  return v;
}
template <>
std::vector<std::pair<double, double>> parse_value<std::vector<std::pair<double, double>>>(
    const std::string& s, const std::string& key) {
  std::vector<std::pair<double, double>> v;
  for (const auto& w : split_list(s)) {
    const auto c = w.find(':');
    if (c == std::string::npos) config_error(key, "expected s:t pairs, got '" + w + "'");
    v.emplace_back(parse_double(w.substr(0, c), key), parse_double(w.substr(c + 1), key));
  }
  return v;
}

struct KeyDef {
  std::string section;
  std::string name;
  std::function<void(Scenario&, const std::string&, const std::string&)> set;
  std::function<json(const Scenario&)> get;
};

template <class T>
KeyDef key(const char* section, const char* name, T Scenario::*m) {
  return {section, name,
          [m](Scenario& s, const std::string& v, const std::string& full) { s.*m = parse_value<T>(v, full); },
          [m](const Scenario& s) { return json(s.*m); }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      key("scenario", "name", &Scenario::name),
      key("scenario", "seed", &Scenario::seed),
      key("model", "kind", &Scenario::model_kind),
      key("model", "size", &Scenario::model_size),
      key("grid", "points", &Scenario::points),
      key("grid", "half_extents", &Scenario::half_extents),
      key("initial", "sigma", &Scenario::u0_sigma),
      key("problem", "beta", &Scenario::beta),
      key("problem", "epsilon", &Scenario::epsilon),
      key("problem", "T", &Scenario::T),
      key("problem", "nonlinearity", &Scenario::nonlinearity),
      key("drift", "source", &Scenario::drift_source),
      key("drift", "file", &Scenario::drift_file),
      key("drift", "amplitude", &Scenario::drift_amplitude),
      key("drift", "window", &Scenario::drift_window),
      key("drift", "max_level", &Scenario::drift_max_level),
      key("drift", "mollify_n", &Scenario::mollify_n),
      key("drift", "mollify_radius", &Scenario::mollify_radius),
      key("fp", "n_t", &Scenario::fp_n_t),
      key("fp", "rho", &Scenario::fp_rho),
      key("fp", "max_iters", &Scenario::fp_max_iters),
      key("fp", "tol", &Scenario::fp_tol),
      key("fp", "contraction_target", &Scenario::fp_contraction_target),
      key("fp", "quadrature", &Scenario::fp_quadrature),
      key("fp", "cache_bytes", &Scenario::fp_cache_bytes),
      key("fp", "stability_levels", &Scenario::stability_levels),
      key("kolmogorov", "n_t", &Scenario::kol_n_t),
      key("kolmogorov", "lambda", &Scenario::kol_lambda),
      key("kolmogorov", "bound", &Scenario::kol_bound),
      key("kolmogorov", "full_ladder", &Scenario::kol_full_ladder),
      key("kolmogorov", "zvonkin_points", &Scenario::zvonkin_points),
      key("schauder", "points", &Scenario::schauder_points),
      key("schauder", "half_extents", &Scenario::schauder_half_extents),
      key("schauder", "gamma", &Scenario::schauder_gamma),
      key("schauder", "alpha", &Scenario::schauder_alpha),
      key("schauder", "samples", &Scenario::schauder_samples),
      key("schauder", "t_min", &Scenario::schauder_t_min),
      key("schauder", "t_max", &Scenario::schauder_t_max),
      key("schauder", "t_count", &Scenario::schauder_t_count),
      key("schauder", "decay_levels", &Scenario::decay_levels),
      key("schauder", "decay_t_min", &Scenario::decay_t_min),
      key("schauder", "decay_t_max", &Scenario::decay_t_max),
      key("schauder", "decay_t_count", &Scenario::decay_t_count),
      key("simulation", "M", &Scenario::sim_M),
      key("simulation", "dt", &Scenario::sim_dt),
      key("simulation", "checkpoints", &Scenario::sim_checkpoints),
      key("simulation", "drift_upsample", &Scenario::sim_drift_upsample),
      key("simulation", "scheme", &Scenario::sim_scheme),
      key("simulation", "marginal_M_small", &Scenario::marginal_M_small),
      key("martingale", "points", &Scenario::mart_points),
      key("martingale", "half_extents", &Scenario::mart_half_extents),
      key("martingale", "amplitude", &Scenario::mart_amplitude),
      key("martingale", "max_level", &Scenario::mart_max_level),
      key("martingale", "n_t", &Scenario::mart_n_t),
      key("martingale", "M", &Scenario::mart_M),
      key("martingale", "dt", &Scenario::mart_dt),
      key("martingale", "pairs", &Scenario::mart_pairs),
      key("martingale", "fault", &Scenario::mart_fault),
      key("martingale", "threshold", &Scenario::mart_threshold),
  };
  return table;
}

std::vector<double> log_times(double lo, double hi, int n) {
  std::vector<double> t;
  for (int i = 0; i < n; ++i) t.push_back(lo * std::pow(hi / lo, n > 1 ? double(i) / (n - 1) : 0.0));
  return t;
}

/// Resample a time field onto n uniform points of the same interval.
TimeField retime(const TimeField& f, int n) {
  if (f.n_points() == n) return f;
  std::vector<GridField> v;
  for (int i = 0; i < n; ++i) v.push_back(f.at_time(f.t0() + (f.t1() - f.t0()) * i / (n - 1)));
  return TimeField(f.t0(), f.t1(), std::move(v));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_history_csv(const std::string& path, const FPSolution& sol) {
  std::ofstream os(path);
  if (!os) KMV_THROW(kIoError, "cannot write " + path);
  os.precision(17);
  os << "iteration,increment,max_block_increment\n";
  for (const auto& h : sol.history) {
    double m = 0;
    for (double v : h.per_time) m = std::max(m, v);
    os << h.iteration << ',' << h.increment << ',' << m << '\n';
  }
}

std::vector<GridField> martingale_g_list(const AnisoGrid& grid) {
  std::vector<GridField> g;
  g.push_back(GridField::Sample(grid, [](const Eigen::VectorXd& z) { return std::exp(-z.squaredNorm()); }));
  g.push_back(GridField::Sample(grid, [](const Eigen::VectorXd& z) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(z.size());
    c(0) = 0.5;
    if (z.size() > 1) c(1) = -0.3;
    return std::exp(-(z - c).squaredNorm() / 0.5);
  }));
  return g;
}

json martingale_json(const MartingaleReport& r) {
  return {{"M", r.M}, {"cases", r.rows.size()}, {"failures", r.failures}, {"max_abs_z", r.max_abs_z}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

Scenario Scenario::FromIni(const std::string& text, const std::string& name) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    KMV_THROW(kConfigError, name + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  Scenario sc;
  sc.name = name;
  const auto& table = key_table();
  for (const auto& [section, body] : tree) {
    if (body.empty()) config_error(section, "key outside of a section");
    for (const auto& [k, v] : body) {
      const std::string full = section + "." + k;
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const KeyDef& d) { return d.section == section && d.name == k; });
      if (it == table.end()) config_error(full, "unknown key");
      it->set(sc, v.get_value<std::string>(), full);
    }
  }
  sc.validate();
  return sc;
}

Scenario Scenario::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) KMV_THROW(kConfigError, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return FromIni(ss.str(), fs::path(path).stem().string());
}

std::string Scenario::preset_dir() {
  if (const char* env = std::getenv("KMV_PRESET_DIR")) return env;
  return KMV_PRESET_DIR;
}

Scenario Scenario::Preset(const std::string& name) {
  const fs::path p = fs::path(preset_dir()) / (name + ".ini");
  if (!fs::exists(p)) KMV_THROW(kConfigError, "unknown preset '" + name + "' (no " + p.string() + ")");
  return Load(p.string());
}

void Scenario::validate() const {
  if (model_kind != "kinetic" && model_kind != "chain")
    config_error("model.kind", "must be kinetic or chain");
  if (model_kind == "kinetic" && model_size < 1) config_error("model.size", "must be >= 1");
  if (model_kind == "chain" && model_size < 2) config_error("model.size", "chain needs >= 2 coordinates");
  const int N = model_kind == "kinetic" ? 2 * model_size : model_size;

  auto check_grid = [&](const std::string& sec, const std::vector<int>& n, const std::vector<double>& L) {
    if (static_cast<int>(n.size()) != N)
      config_error(sec + ".points", "needs " + std::to_string(N) + " entries");
    if (static_cast<int>(L.size()) != N)
      config_error(sec + ".half_extents", "needs " + std::to_string(N) + " entries");
    for (int v : n)
      if (v < 2 || v % 2) config_error(sec + ".points", "point counts must be even and >= 2");
    for (double v : L)
      if (!(v > 0)) config_error(sec + ".half_extents", "half extents must be positive");
  };
  check_grid("grid", points, half_extents);
  check_grid("schauder", schauder_points, schauder_half_extents);
  check_grid("martingale", mart_points, mart_half_extents);

  if (!(u0_sigma > 0)) config_error("initial.sigma", "must be positive");
  if (!(beta > 0 && beta < 0.5)) config_error("problem.beta", "beta must lie in (0, 1/2)");
  if (!(epsilon > 0 && epsilon < 1 - 2 * beta))
    config_error("problem.epsilon", "epsilon must lie in (0, 1 - 2 beta)");
  if (!(T > 0)) config_error("problem.T", "must be positive");
  if (nonlinearity != "rational" && nonlinearity != "constant" && nonlinearity != "linear")
    config_error("problem.nonlinearity", "must be rational, constant or linear");

  if (drift_source != "synthesize" && drift_source != "file" && drift_source != "zero")
    config_error("drift.source", "must be synthesize, file or zero");
  if (drift_source == "file" && !fs::exists(drift_file))
    config_error("drift.file", "file '" + drift_file + "' does not exist");
  if (!(drift_amplitude >= 0)) config_error("drift.amplitude", "must be nonnegative");
  if (!(mollify_n >= 0)) config_error("drift.mollify_n", "must be nonnegative (0 disables)");
  if (!(mollify_radius > 0)) config_error("drift.mollify_radius", "must be positive");

  if (fp_n_t < 2) config_error("fp.n_t", "must be >= 2");
  if (!(fp_rho >= 0)) config_error("fp.rho", "must be nonnegative");
  if (fp_max_iters < 1) config_error("fp.max_iters", "must be >= 1");
  if (!(fp_tol > 0)) config_error("fp.tol", "must be positive");
  if (!(fp_contraction_target > 0 && fp_contraction_target < 1))
    config_error("fp.contraction_target", "must lie in (0, 1)");
  try {
    parse_quadrature_rule(fp_quadrature);
  } catch (const Error&) {
    config_error("fp.quadrature", "unknown rule '" + fp_quadrature + "'");
  }
  if (!(fp_cache_bytes >= 0)) config_error("fp.cache_bytes", "must be nonnegative");
  if (stability_levels.size() < 3) config_error("fp.stability_levels", "needs >= 3 levels");
  for (std::size_t i = 0; i < stability_levels.size(); ++i)
    if (!(stability_levels[i] > 0) || (i && stability_levels[i] <= stability_levels[i - 1]))
      config_error("fp.stability_levels", "must be positive and increasing");

  if (kol_n_t < 2) config_error("kolmogorov.n_t", "must be >= 2");
  if (!(kol_lambda >= 0)) config_error("kolmogorov.lambda", "must be nonnegative");
  if (!(kol_bound > 0)) config_error("kolmogorov.bound", "must be positive");
  if (zvonkin_points < 1) config_error("kolmogorov.zvonkin_points", "must be >= 1");

  if (!(schauder_alpha > 0)) config_error("schauder.alpha", "must be positive");
  if (schauder_samples < 1) config_error("schauder.samples", "must be >= 1");
  if (!(schauder_t_min > 0 && schauder_t_max > schauder_t_min))
    config_error("schauder.t_max", "need 0 < t_min < t_max");
  if (schauder_t_count < 2) config_error("schauder.t_count", "must be >= 2");
  if (decay_levels.empty()) config_error("schauder.decay_levels", "must not be empty");
  if (!(decay_t_min > 0 && decay_t_max > decay_t_min))
    config_error("schauder.decay_t_max", "need 0 < decay_t_min < decay_t_max");
  if (decay_t_count < 2) config_error("schauder.decay_t_count", "must be >= 2");

  if (sim_M < 1000) config_error("simulation.M", "must be >= 1000");
  if (!(sim_dt > 0 && sim_dt <= T)) config_error("simulation.dt", "must lie in (0, T]");
  if (sim_checkpoints.empty()) config_error("simulation.checkpoints", "must not be empty");
  for (std::size_t i = 0; i < sim_checkpoints.size(); ++i)
    if (!(sim_checkpoints[i] > 0 && sim_checkpoints[i] <= T) ||
        (i && sim_checkpoints[i] <= sim_checkpoints[i - 1]))
      config_error("simulation.checkpoints", "must be increasing within (0, T]");
  if (sim_drift_upsample < 1) config_error("simulation.drift_upsample", "must be >= 1");
  {
    // the simulators hold the refined drift at every FP mesh time
    const int d = model_kind == "kinetic" ? model_size : 1;
    auto drift_bytes = [&](const std::vector<int>& pts, int n_t) {
      double b = 8.0 * d * (n_t + 1);
      for (int n : pts) b *= static_cast<double>(n) * sim_drift_upsample;
      return b;
    };
    const double need = std::max(drift_bytes(points, fp_n_t), drift_bytes(mart_points, mart_n_t));
    if (need > kDriftBudgetBytes)
      config_error("simulation.drift_upsample",
                   "refined drift needs " + std::to_string(need / 1e9) + " GB (limit " +
                       std::to_string(kDriftBudgetBytes / 1e9) + " GB)");
  }
  if (sim_scheme != "euler" && sim_scheme != "exact-ou")
    config_error("simulation.scheme", "must be euler or exact-ou");
  if (marginal_M_small < 1000 || marginal_M_small >= sim_M)
    config_error("simulation.marginal_M_small", "must lie in [1000, M)");

  if (!(mart_amplitude >= 0)) config_error("martingale.amplitude", "must be nonnegative");
  if (mart_n_t < 2) config_error("martingale.n_t", "must be >= 2");
  if (mart_M < 1000) config_error("martingale.M", "must be >= 1000");
  if (!(mart_dt > 0 && mart_dt <= T)) config_error("martingale.dt", "must lie in (0, T]");
  if (mart_pairs.empty()) config_error("martingale.pairs", "must not be empty");
  for (const auto& [s, t] : mart_pairs)
    if (!(s > 0 && s < t && t <= T)) config_error("martingale.pairs", "need 0 < s < t <= T");
  if (!(mart_fault > 0)) config_error("martingale.fault", "must be positive");
  if (!(mart_threshold > 0)) config_error("martingale.threshold", "must be positive");
}

json Scenario::to_json() const {
  json j = json::object();
  for (const auto& d : key_table()) j[d.section][d.name] = d.get(*this);
  return j;
}

// ---------------------------------------------------------------------------
// Builders

KolmogorovModel Scenario::model() const {
  if (model_kind == "kinetic") return KolmogorovModel::Make(kinetic_drift(model_size), model_size);
  return KolmogorovModel::Make(chain_drift(model_size), 1);
}

AnisoGrid Scenario::grid() const { return AnisoGrid(model().blocks, half_extents, points); }
AnisoGrid Scenario::schauder_grid() const {
  return AnisoGrid(model().blocks, schauder_half_extents, schauder_points);
}
AnisoGrid Scenario::martingale_grid() const {
  return AnisoGrid(model().blocks, mart_half_extents, mart_points);
}

NonlinearitySpec Scenario::nonlin() const {
  const int d = model().blocks.d;
  return NonlinearitySpec::FromId(nonlinearity, d, d);
}

GridField Scenario::initial_density(const AnisoGrid& grid) const {
  const double s2 = u0_sigma * u0_sigma;
  GridField u = GridField::Sample(grid, [&](const Eigen::VectorXd& z) { return std::exp(-z.squaredNorm() / (2 * s2)); });
  u *= 1.0 / u.integral();
  return u;
}

TimeField Scenario::raw_drift(const AnisoGrid& grid, int n_points) const {
  const int d = grid.blocks().d;
  if (drift_source == "zero") return TimeField::Constant(0.0, T, n_points, GridField(grid, d));
  if (drift_source == "file") {
    GridField f = read_gfd(drift_file);
    if (f.grid() != grid) KMV_THROW(kConfigError, "drift.file: grid does not match the scenario grid");
    if (f.channels() != d) KMV_THROW(kConfigError, "drift.file: needs " + std::to_string(d) + " channels");
    return TimeField::Constant(0.0, T, n_points, f);
  }
  SynthesisOptions so;
  so.amplitude = drift_amplitude;
  so.window = drift_window;
  so.max_level = drift_max_level;
  return synthesize_besov_field(beta, drift_seed(), grid, d, T, n_points, so);
}

TimeField Scenario::drift(const AnisoGrid& grid, int n_points) const {
  TimeField b = raw_drift(grid, n_points);
  return mollify_n > 0 ? mollify(b, mollify_n, mollify_radius) : b;
}

SolverConfig Scenario::fp_config() const {
  SolverConfig c;
  c.rho = fp_rho;
  c.max_iters = fp_max_iters;
  c.picard_tol = fp_tol;
  c.contraction_target = fp_contraction_target;
  c.n_t = fp_n_t;
  c.rule = parse_quadrature_rule(fp_quadrature);
  c.cache_bytes = fp_cache_bytes;
  return c;
}

SolverConfig Scenario::kolmogorov_config() const {
  SolverConfig c = fp_config();
  c.n_t = kol_n_t;
  return c;
}

FPProblem Scenario::fp_problem(const AnisoGrid& grid, TimeField b) const {
  FPProblem p{model(), std::move(b), initial_density(grid), beta, epsilon, T};
  p.validate();
  return p;
}

std::vector<double> Scenario::schauder_times() const {
  return log_times(schauder_t_min, schauder_t_max, schauder_t_count);
}
std::vector<double> Scenario::decay_times() const {
  return log_times(decay_t_min, decay_t_max, decay_t_count);
}
StepScheme Scenario::scheme() const {
  return sim_scheme == "exact-ou" ? StepScheme::kExactOU : StepScheme::kEuler;
}

// ---------------------------------------------------------------------------
// Output

RunOutput::RunOutput(std::string dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) KMV_THROW(kIoError, "cannot create output directory " + dir_ + ": " + ec.message());
}

std::string RunOutput::file(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  return (fs::path(dir_) / name).string();
}

void RunOutput::write_json(const std::string& name, const json& j) {
  std::ofstream os(file(name));
  if (!os) KMV_THROW(kIoError, "cannot write " + name);
  os << j.dump(2) << '\n';
}

void RunOutput::record_time(const std::string& stage, double seconds) { timing_[stage] = seconds; }

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) KMV_THROW(kIoError, "cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void RunOutput::write_manifest(const Scenario& sc, const std::string& subcommand, bool ok) const {
  json m;
  m["scenario"] = sc.name;
  m["subcommand"] = subcommand;
  m["ok"] = ok;
  m["config"] = sc.to_json();
  std::vector<std::string> names = files_;
  std::sort(names.begin(), names.end());
  json files = json::array();
  for (const auto& n : names) {
    const fs::path p = fs::path(dir_) / n;
    files.push_back({{"file", n}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p.string())}});
  }
  m["files"] = files;
  std::ofstream os((fs::path(dir_) / "manifest.json").string());
  if (!os) KMV_THROW(kIoError, "cannot write manifest");
  os << m.dump(2) << '\n';
  std::ofstream ts((fs::path(dir_) / "timing.json").string());
  ts << timing_.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Pipelines

FPRun solve_scenario_fp(const Scenario& sc, bool b_zero, std::shared_ptr<const Duhamel> shared) {
  FPRun r;
  r.grid = sc.grid();
  const int n = sc.fp_n_t + 1;
  r.b = b_zero ? TimeField::Constant(0.0, sc.T, n, GridField(r.grid, r.grid.blocks().d))
               : sc.drift(r.grid, n);
  FPSolver solver(sc.fp_problem(r.grid, r.b), sc.nonlin(), sc.fp_config(), std::move(shared));
  r.duhamel = solver.duhamel();
  r.solution = solver.solve();
  return r;
}

StabilityLadder fp_stability_ladder(const Scenario& sc) {
  StabilityLadder lad;
  const AnisoGrid grid = sc.grid();
  const int n = sc.fp_n_t + 1;
  const TimeField raw = sc.raw_drift(grid, n);
  const double u_index = sc.beta + sc.epsilon;
  std::shared_ptr<const Duhamel> shared;
  std::vector<TimeField> us, bs;
  for (double level : sc.stability_levels) {
    TimeField b = mollify(raw, level, sc.mollify_radius);
    FPSolver solver(sc.fp_problem(grid, b), sc.nonlin(), sc.fp_config(), shared);
    shared = solver.duhamel();
    us.push_back(solver.solve().u);
    bs.push_back(std::move(b));
  }
  std::vector<double> lx, lu, lb;
  for (std::size_t i = 0; i + 1 < us.size(); ++i) {
    double du = 0, db = 0;
    for (int k = 0; k < n; ++k) {
      du = std::max(du, besov_norm(us[i][k] - us[i + 1][k], u_index));
      db = std::max(db, besov_norm(bs[i][k] - bs[i + 1][k], -sc.beta - lad.eta));
    }
    lad.levels.push_back(sc.stability_levels[i]);
    lad.du.push_back(du);
    lad.db.push_back(db);
    lx.push_back(std::log(sc.stability_levels[i]));
    lu.push_back(std::log(du));
    lb.push_back(std::log(db));
  }
  lad.slope_u = fit_slope(lx, lu);
  lad.slope_b = fit_slope(lx, lb);
  lad.monotone = true;
  for (std::size_t i = 1; i < lad.du.size(); ++i) lad.monotone = lad.monotone && lad.du[i] < lad.du[i - 1];
  return lad;
}

json run_probe_schauder(const Scenario& sc, RunOutput& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const KolmogorovModel model = sc.model();
  const AnisoGrid sg = sc.schauder_grid();
  SynthesisOptions so;
  so.window = true;
  std::vector<GridField> samples;
  for (int i = 0; i < sc.schauder_samples; ++i)
    samples.push_back(synthesize_besov_field(-sc.schauder_gamma, sc.schauder_seed() + i, sg, 1, so));
  const SchauderReport rep = schauder_probe(model, sc.schauder_gamma, sc.schauder_alpha, sc.schauder_times(), samples);
  write_schauder_csv(out.file("schauder.csv"), rep);
  out.record_time("schauder", seconds_since(t0));

  const auto t1 = std::chrono::steady_clock::now();
  const BlockDecayReport dec = kernel_block_decay(model, sc.grid(), sc.decay_times(), sc.decay_levels);
  write_block_decay_csv(out.file("block_decay.csv"), dec);
  out.record_time("block_decay", seconds_since(t1));

  const double expected = -sc.schauder_alpha / 2;
  json s = {{"slope", rep.slope},
            {"slope_P", rep.slope_P},
            {"expected_slope", expected},
            {"running_max_spread", rep.running_max_spread},
            {"max_ratio", rep.max_ratio},
            {"J_max", sg.J_max()},
            {"block_decay_slope", dec.slope},
            {"block_decay_fit_points", dec.fit_points},
            {"block_decay_J_max", sc.grid().J_max()}};
  s["ok"] = std::abs(rep.slope / expected - 1) <= 0.2 && rep.running_max_spread <= 5 && dec.slope <= -1;
  return s;
}

json run_solve_fp(const Scenario& sc, RunOutput& out, bool b_zero) {
  const auto t0 = std::chrono::steady_clock::now();
  const FPRun run = solve_scenario_fp(sc, b_zero);
  out.record_time("fp_solve", seconds_since(t0));
  const FPSolution& sol = run.solution;
  write_history_csv(out.file("fp_history.csv"), sol);
  const ConservationReport cons = conservation_report(sol.u);
  write_conservation_csv(out.file("conservation.csv"), cons);
  write_gfd(out.file("u_final.gfd"), sol.u[sol.u.n_points() - 1]);

  json s = {{"iterations", sol.iterations},
            {"rho", sol.rho},
            {"contraction", sol.contraction},
            {"final_increment", sol.history.empty() ? 0.0 : sol.history.back().increment},
            {"mass_deviation", cons.max_mass_deviation},
            {"min_value", cons.global_min},
            {"continuity_modulus", sol.continuity_modulus},
            {"n_t", sc.fp_n_t},
            {"b_zero", b_zero}};
  bool ok = cons.ok && sol.contraction <= sc.fp_contraction_target;
  if (b_zero || sc.drift_source == "zero") {
    const KolmogorovModel model = sc.model();
    double diff = 0;
    for (int i = 0; i < sol.u.n_points(); ++i)
      diff = std::max(diff, (sol.u[i] - apply_Pprime(model, sol.u.time(i), sol.u[0])).sup_norm());
    s["free_evolution_diff"] = diff;
    ok = ok && diff <= 1e-10;
  }
  s["ok"] = ok;
  return s;
}

json run_solve_kolmogorov(const Scenario& sc, RunOutput& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const FPRun run = solve_scenario_fp(sc);
  const NonlinearitySpec nl = sc.nonlin();
  const TimeField Bc = retime(frozen_drift(run.solution.u, run.b, nl), sc.kol_n_t + 1);
  out.record_time("fp_solve", seconds_since(t0));

  const auto t1 = std::chrono::steady_clock::now();
  const BackwardProblem bp = BackwardProblem::Zvonkin(sc.model(), Bc, sc.kol_lambda, sc.beta, sc.epsilon, sc.T);
  const BackwardSolution sol = solve_kolmogorov(bp, sc.kolmogorov_config());
  out.record_time("backward_solve", seconds_since(t1));
  double norm = 0;
  for (int i = 0; i < sol.u.n_points(); ++i) norm = std::max(norm, besov_norm(sol.u[i], 1 + sc.beta + sc.epsilon));
  const double residual = kolmogorov_residual(sol.u, bp);
  write_gfd(out.file("u_initial.gfd"), sol.u[0]);
  {
    std::ofstream os(out.file("backward_history.csv"));
    os.precision(17);
    os << "iteration,increment\n";
    for (std::size_t i = 0; i < sol.increments.size(); ++i) os << i + 1 << ',' << sol.increments[i] << '\n';
  }
  json s = {{"lambda", sc.kol_lambda},   {"iterations", sol.iterations}, {"rho", sol.rho},
            {"contraction", sol.contraction}, {"sup_norm_1_beta_eps", norm}, {"strong_residual", residual}};
  s["ok"] = std::isfinite(norm) && sol.contraction <= sc.fp_contraction_target;
  return s;
}

ZvonkinCheck zvonkin_check(const Scenario& sc, const TimeField& Bc) {
  ZvonkinCheck zc;
  const KolmogorovModel model = sc.model();
  const BackwardProblem bp = BackwardProblem::Zvonkin(model, retime(Bc, sc.kol_n_t + 1), 1.0, sc.beta, sc.epsilon, sc.T);
  zc.search = lambda_bar_search(bp, sc.kolmogorov_config(), sc.kol_bound, 1048576.0, sc.kol_full_ladder);
  const ZvonkinMaps maps = zvonkin_phi(zc.search.solution.u, sc.beta, sc.epsilon);
  zc.gradient_bound = maps.gradient_bound();
  const AnisoGrid& grid = Bc.grid();
  std::mt19937_64 rng(sc.seed + 4);
  std::uniform_real_distribution<double> unit(-0.5, 0.5), ut(0.0, sc.T);
  for (int i = 0; i < sc.zvonkin_points; ++i) {
    Eigen::VectorXd z(grid.dim());
    for (int k = 0; k < grid.dim(); ++k) z(k) = unit(rng) * grid.half_extent(k);
    const double t = ut(rng);
    const PsiResult r = zvonkin_psi_detail(maps, t, maps.phi(t, z));
    zc.roundtrip_error = std::max(zc.roundtrip_error, (r.z - z).norm());
    zc.psi_contraction = std::max(zc.psi_contraction, r.contraction);
    zc.psi_iterations = std::max(zc.psi_iterations, r.iterations);
  }
  return zc;
}

json run_zvonkin(const Scenario& sc, RunOutput& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const FPRun run = solve_scenario_fp(sc);
  const TimeField Bc = frozen_drift(run.solution.u, run.b, sc.nonlin());
  out.record_time("fp_solve", seconds_since(t0));
  const auto t1 = std::chrono::steady_clock::now();
  const ZvonkinCheck zc = zvonkin_check(sc, Bc);
  out.record_time("zvonkin", seconds_since(t1));
  write_ladder_csv(out.file("ladder.csv"), zc.search.ladder);
  json s = {{"lambda", zc.search.lambda},
            {"achieved_norm", zc.search.achieved_norm},
            {"bound", sc.kol_bound},
            {"gradient_bound", zc.gradient_bound},
            {"roundtrip_points", sc.zvonkin_points},
            {"roundtrip_error", zc.roundtrip_error},
            {"psi_contraction", zc.psi_contraction},
            {"psi_iterations", zc.psi_iterations}};
  s["ok"] = zc.search.achieved_norm <= sc.kol_bound && zc.roundtrip_error <= 1e-8 && zc.psi_contraction <= 0.55;
  return s;
}

json run_simulate(const Scenario& sc, RunOutput& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const KolmogorovModel model = sc.model();
  const AnisoGrid grid = sc.grid();
  TimeField D;
  const bool free = sc.drift_source == "zero";
  if (!free) D = frozen_drift(solve_scenario_fp(sc).solution.u, sc.drift(grid, sc.fp_n_t + 1), sc.nonlin());
  out.record_time("fp_solve", seconds_since(t0));

  const auto t1 = std::chrono::steady_clock::now();
  const GridField u0 = sc.initial_density(grid);
  ParticleEnsemble ens = sample_initial(u0, sc.sim_M, sc.simulation_seed());
  SimulationOptions opts;
  opts.dt = sc.sim_dt;
  opts.scheme = sc.scheme();
  opts.checkpoints = sc.sim_checkpoints;
  opts.drift_upsample = sc.sim_drift_upsample;
  simulate(ens, model, free ? nullptr : &D, sc.sim_checkpoints.back(), opts);
  out.record_time("simulate", seconds_since(t1));
  write_trajectories(out.file("trajectories.traj"), ens);

  const int N = ens.N;
  std::ofstream os(out.file("moments.csv"));
  os.precision(17);
  os << "t,coordinate_i,coordinate_j,covariance,reference\n";
  double worst = 0;
  const Eigen::MatrixXd cov0 = sc.u0_sigma * sc.u0_sigma * Eigen::MatrixXd::Identity(N, N);
  for (const auto& rec : ens.records) {
    const Eigen::MatrixXd S = ParticleEnsemble::covariance_of(rec.z, N);
    const Eigen::MatrixXd E = matrix_exp(model.B, rec.t);
    const Eigen::MatrixXd ref = E * cov0 * E.transpose() + covariance(model, rec.t);
    for (int a = 0; a < N; ++a)
      for (int b = a; b < N; ++b) {
        os << rec.t << ',' << a << ',' << b << ',' << S(a, b) << ',' << ref(a, b) << '\n';
        if (free && a == b) worst = std::max(worst, std::abs(S(a, b) / ref(a, b) - 1));
      }
  }
  const double escape_rate = ens.particle_steps ? double(ens.escapes) / ens.particle_steps : 0.0;
  json s = {{"M", ens.M}, {"dt", sc.sim_dt}, {"escapes", ens.escapes}, {"escape_rate", escape_rate},
            {"drift_free", free}};
  bool ok = escape_rate < 1e-3;
  if (free) {
    s["max_relative_variance_error"] = worst;
    ok = ok && worst <= 0.05;
  }
  s["ok"] = ok;
  return s;
}

MartingaleRun martingale_run(const Scenario& sc) {
  MartingaleRun mr;
  Scenario ms = sc;
  ms.points = sc.mart_points;
  ms.half_extents = sc.mart_half_extents;
  ms.drift_amplitude = sc.mart_amplitude;
  ms.drift_max_level = sc.mart_max_level;
  ms.fp_n_t = sc.mart_n_t;
  const FPRun run = solve_scenario_fp(ms);
  const KolmogorovModel model = ms.model();
  const TimeField Bc = frozen_drift(run.solution.u, run.b, ms.nonlin());
  const std::vector<GridField> g = martingale_g_list(run.grid);

  std::vector<double> cps;
  for (const auto& [s, t] : sc.mart_pairs) {
    cps.push_back(s);
    cps.push_back(t);
  }
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  ParticleEnsemble ens = sample_initial(run.solution.u[0], sc.mart_M, sc.martingale_seed());
  SimulationOptions so;
  so.dt = sc.mart_dt;
  so.checkpoints = cps;
  so.integrands = g;
  so.drift_upsample = sc.sim_drift_upsample;
  simulate(ens, model, &Bc, cps.back(), so);

  MartingaleOptions mo;
  mo.pairs = sc.mart_pairs;
  mo.T = sc.T;
  mo.backward = ms.fp_config();
  mo.beta = sc.beta;
  mo.epsilon = sc.epsilon;
  mo.threshold = sc.mart_threshold;
  mr.null = martingale_test(model, Bc, ens, g, mo);
  mo.perturb = sc.mart_fault;
  mr.fault = martingale_test(model, Bc, ens, g, mo);
  return mr;
}

json run_martingale_test(const Scenario& sc, RunOutput& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const MartingaleRun mr = martingale_run(sc);
  out.record_time("martingale", seconds_since(t0));
  write_martingale_csv(out.file("martingale.csv"), mr.null);
  write_martingale_csv(out.file("martingale_fault.csv"), mr.fault);
  json s = {{"null", martingale_json(mr.null)}, {"fault", martingale_json(mr.fault)}};
  s["ok"] = mr.null.failures <= 1 && mr.fault.max_abs_z > 5;
  return s;
}

MarginalCheck marginal_check(const Scenario& sc, const FPRun& run) {
  MarginalCheck mc;
  const KolmogorovModel model = sc.model();
  const NonlinearitySpec nl = sc.nonlin();
  mc.large = validate_marginals(model, run.solution.u, run.b, nl, sc.sim_M, sc.simulation_seed(),
                                sc.sim_checkpoints, sc.sim_dt, sc.scheme(), sc.sim_drift_upsample);
  mc.small = validate_marginals(model, run.solution.u, run.b, nl, sc.marginal_M_small, sc.simulation_seed() + 1,
                                sc.sim_checkpoints, sc.sim_dt, sc.scheme(), sc.sim_drift_upsample);
  return mc;
}

json run_full_validate(const Scenario& sc, RunOutput& out) {
  json s;
  auto t0 = std::chrono::steady_clock::now();
  const FPRun run = solve_scenario_fp(sc);
  out.record_time("fp_solve", seconds_since(t0));
  const ConservationReport cons = conservation_report(run.solution.u);
  write_history_csv(out.file("fp_history.csv"), run.solution);
  write_conservation_csv(out.file("conservation.csv"), cons);
  s["fp"] = {{"iterations", run.solution.iterations},
             {"rho", run.solution.rho},
             {"contraction", run.solution.contraction},
             {"mass_deviation", cons.max_mass_deviation},
             {"min_value", cons.global_min}};
  const bool fp_ok = cons.ok && run.solution.contraction <= sc.fp_contraction_target;

  t0 = std::chrono::steady_clock::now();
  const MarginalCheck mc = marginal_check(sc, run);
  out.record_time("marginals", seconds_since(t0));
  {
    std::ofstream os(out.file("marginals.csv"));
    os.precision(17);
    os << "t,M,l1\n";
    for (const MarginalReport* r : {&mc.small, &mc.large})
      for (std::size_t i = 0; i < r->times.size(); ++i) os << r->times[i] << ',' << r->M << ',' << r->l1[i] << '\n';
  }
  bool marg_ok = true;
  for (std::size_t i = 0; i < mc.large.l1.size(); ++i)
    marg_ok = marg_ok && mc.large.l1[i] <= 0.1 && mc.large.l1[i] < mc.small.l1[i];
  s["marginals"] = {{"times", mc.large.times}, {"l1", mc.large.l1}, {"M", mc.large.M},
                    {"l1_small_M", mc.small.l1}, {"M_small", mc.small.M}, {"escapes", mc.large.escapes}};

  t0 = std::chrono::steady_clock::now();
  const MartingaleRun mr = martingale_run(sc);
  out.record_time("martingale", seconds_since(t0));
  write_martingale_csv(out.file("martingale.csv"), mr.null);
  write_martingale_csv(out.file("martingale_fault.csv"), mr.fault);
  s["martingale"] = {{"null", martingale_json(mr.null)}, {"fault", martingale_json(mr.fault)}};
  const bool mart_ok = mr.null.failures <= 1 && mr.fault.max_abs_z > 5;

  s["checks"] = {{"fp", fp_ok}, {"marginals", marg_ok}, {"martingale", mart_ok}};
  s["ok"] = fp_ok && marg_ok && mart_ok;
  return s;
}

json run_scenario(const Scenario& sc, const std::string& subcommand, RunOutput& out, bool b_zero) {
  json s;
  if (subcommand == "probe-schauder") s = run_probe_schauder(sc, out);
  else if (subcommand == "solve-fp") s = run_solve_fp(sc, out, b_zero);
  else if (subcommand == "solve-kolmogorov") s = run_solve_kolmogorov(sc, out);
  else if (subcommand == "zvonkin") s = run_zvonkin(sc, out);
  else if (subcommand == "simulate") s = run_simulate(sc, out);
  else if (subcommand == "martingale-test") s = run_martingale_test(sc, out);
  else if (subcommand == "full-validate") s = run_full_validate(sc, out);
  else KMV_THROW(kConfigError, "unknown subcommand '" + subcommand + "'");
  s["subcommand"] = subcommand;
  s["scenario"] = sc.name;
  out.write_json("summary.json", s);
  out.write_manifest(sc, subcommand, s.value("ok", false));
  return s;
}

}  // namespace kmv
