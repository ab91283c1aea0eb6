#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kmv/anisotropy.hpp"
#include "kmv/fpsolver.hpp"
#include "kmv/kolmogorov.hpp"
#include "kmv/grid.hpp"
#include "kmv/mckean.hpp"
#include "kmv/semigroup.hpp"

namespace kmv {

/// Fully resolved run description.  Every field has a default; a config
/// file only lists what it changes.  All randomness derives from `seed`.
struct Scenario {
  std::string name = "custom";
  std::uint64_t seed = 3;

  // [model]
  std::string model_kind = "kinetic";  // kinetic | chain
  int model_size = 1;                  // d for kinetic, N for chain

  // [grid]
  std::vector<int> points{256, 256};
  std::vector<double> half_extents{6.0, 6.0};

  // [initial]
  double u0_sigma = 0.5;

  // [problem]
  double beta = 0.3;
  double epsilon = 0.2;
  double T = 1.0;
  std::string nonlinearity = "rational";

  // [drift]
  std::string drift_source = "synthesize";  // synthesize | file | zero
  std::string drift_file;
  double drift_amplitude = 0.1;
  bool drift_window = true;
  int drift_max_level = -1;
  double mollify_n = 8.0;
  double mollify_radius = 0.125;

  // [fp]
  int fp_n_t = 64;
  double fp_rho = 0.0;
  int fp_max_iters = 30;
  double fp_tol = 1e-8;
  double fp_contraction_target = 0.9;
  std::string fp_quadrature = "exponential";
  double fp_cache_bytes = 1.2e9;
  std::vector<double> stability_levels{2, 4, 8, 16, 32};

  // [kolmogorov]
  int kol_n_t = 32;
  double kol_lambda = 64.0;
  double kol_bound = 0.5;
  bool kol_full_ladder = false;
  int zvonkin_points = 1000;

  // [schauder]
  std::vector<int> schauder_points{4096, 2};
  std::vector<double> schauder_half_extents{25.132741228718345, 6.283185307179586};
  double schauder_gamma = -0.4;
  double schauder_alpha = 1.2;
  int schauder_samples = 10;
  double schauder_t_min = 1e-3;
  double schauder_t_max = 1e-1;
  int schauder_t_count = 13;
  std::vector<int> decay_levels{1, 2, 3, 4, 5};
  double decay_t_min = 1e-3;
  double decay_t_max = 0.316227766016838;
  int decay_t_count = 9;

  // [simulation]
  std::size_t sim_M = 100000;
  double sim_dt = 1e-3;
  std::vector<double> sim_checkpoints{0.25, 0.5, 1.0};
  int sim_drift_upsample = 4;
  std::string sim_scheme = "euler";
  std::size_t marginal_M_small = 10000;

  // [martingale]
  std::vector<int> mart_points{128, 128};
  std::vector<double> mart_half_extents{6.0, 6.0};
  double mart_amplitude = 0.2;
  int mart_max_level = 2;
  int mart_n_t = 32;
  std::size_t mart_M = 100000;
  double mart_dt = 1e-3;
  std::vector<std::pair<double, double>> mart_pairs{{0.25, 0.5}, {0.5, 1.0}};
  double mart_fault = 0.1;
  double mart_threshold = 3.0;

  /// Parses an INI document; unknown keys, malformed values and
  /// out-of-range parameters raise ConfigError naming the key.
  static Scenario FromIni(const std::string& text, const std::string& name = "custom");
  static Scenario Load(const std::string& path);
  /// Looks up presets/<name>.ini in the source tree.
  static Scenario Preset(const std::string& name);
  static std::string preset_dir();

  /// Range checks against the module preconditions (called by the parsers).
  void validate() const;
  /// Every key with its resolved value, grouped by section.
  nlohmann::json to_json() const;

  // Builders shared by the pipelines.
  KolmogorovModel model() const;
  AnisoGrid grid() const;
  AnisoGrid schauder_grid() const;
  AnisoGrid martingale_grid() const;
  NonlinearitySpec nonlin() const;
  /// Isotropic Gaussian density N(0, u0_sigma^2 I), renormalized to unit
  /// grid mass.
  GridField initial_density(const AnisoGrid& grid) const;
  /// Unmollified drift on n_points uniform times of [0, T] (m = d channels).
  TimeField raw_drift(const AnisoGrid& grid, int n_points) const;
  TimeField drift(const AnisoGrid& grid, int n_points) const;
  SolverConfig fp_config() const;
  SolverConfig kolmogorov_config() const;
  FPProblem fp_problem(const AnisoGrid& grid, TimeField b) const;
  std::vector<double> schauder_times() const;
  std::vector<double> decay_times() const;
  StepScheme scheme() const;

  std::uint64_t drift_seed() const { return seed; }
  std::uint64_t simulation_seed() const { return seed + 2; }
  std::uint64_t martingale_seed() const { return seed + 18; }
  std::uint64_t schauder_seed() const { return seed + 997; }
};

/// Collects emitted files for the manifest.
class RunOutput {
 public:
  explicit RunOutput(std::string dir);

  const std::string& dir() const { return dir_; }
  /// Absolute-ish path of a file in the output directory, registered for the
  /// manifest.
  std::string file(const std::string& name);
  void write_json(const std::string& name, const nlohmann::json& j);
  void record_time(const std::string& stage, double seconds);

  /// manifest.json: scenario, subcommand, resolved config and the SHA-256 of
  /// every registered file.  Timings go to timing.json, which is not
  /// checksummed (wall clock is not reproducible).
  void write_manifest(const Scenario& sc, const std::string& subcommand, bool ok) const;

 private:
  std::string dir_;
  std::vector<std::string> files_;
  nlohmann::json timing_ = nlohmann::json::object();
};

std::string sha256_file(const std::string& path);

/// Pieces shared by the pipelines and the acceptance run.
struct FPRun {
  AnisoGrid grid;
  TimeField b;
  FPSolution solution;
  std::shared_ptr<const Duhamel> duhamel;
};
/// FP solve on the scenario grid with the scenario's mollified drift (or
/// b = 0).
FPRun solve_scenario_fp(const Scenario& sc, bool b_zero = false,
                        std::shared_ptr<const Duhamel> shared = nullptr);

/// u^{(n)} for n over stability_levels (one shared set of weights) and the
/// successive differences ||u^{(n)} - u^{(n')}||_{T, beta+eps} and
/// ||b^{(n)} - b^{(n')}||_{T, -beta-eta}.
struct StabilityLadder {
  double eta = 0.1;
  std::vector<double> levels;
  std::vector<double> du;
  std::vector<double> db;
  double slope_u = 0.0;
  double slope_b = 0.0;
  bool monotone = false;
};
StabilityLadder fp_stability_ladder(const Scenario& sc);

struct ZvonkinCheck {
  LambdaSearchResult search;
  double gradient_bound = 0.0;
  double roundtrip_error = 0.0;
  double psi_contraction = 0.0;
  int psi_iterations = 0;
};
/// lambda-bar search for the Zvonkin system with drift Bc, then the
/// phi/psi round trip on zvonkin_points random (t, z).
ZvonkinCheck zvonkin_check(const Scenario& sc, const TimeField& Bc);

struct MarginalCheck {
  MarginalReport large;
  MarginalReport small;
};
MarginalCheck marginal_check(const Scenario& sc, const FPRun& run);

struct MartingaleRun {
  MartingaleReport null;
  MartingaleReport fault;
};
/// Solves FP on the martingale grid, simulates with Bc = F(u) b and runs
/// the panel with and without the injected fault.
MartingaleRun martingale_run(const Scenario& sc);

/// Subcommand pipelines.  Each writes its artifacts through `out` and
/// returns a summary whose "ok" member says whether every check held.
nlohmann::json run_probe_schauder(const Scenario& sc, RunOutput& out);
nlohmann::json run_solve_fp(const Scenario& sc, RunOutput& out, bool b_zero = false);
nlohmann::json run_solve_kolmogorov(const Scenario& sc, RunOutput& out);
nlohmann::json run_zvonkin(const Scenario& sc, RunOutput& out);
nlohmann::json run_simulate(const Scenario& sc, RunOutput& out);
nlohmann::json run_martingale_test(const Scenario& sc, RunOutput& out);
nlohmann::json run_full_validate(const Scenario& sc, RunOutput& out);

/// Dispatch by subcommand name; writes summary.json and the manifest.
/// Returns the summary.
nlohmann::json run_scenario(const Scenario& sc, const std::string& subcommand, RunOutput& out,
                            bool b_zero = false);

}  // namespace kmv
