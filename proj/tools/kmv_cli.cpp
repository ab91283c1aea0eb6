// kmv: scenario runner.
//
//   kmv <subcommand> [--config PATH | --preset NAME] [--out DIR] [--seed N] [--threads N]
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure (including a
// pipeline whose checks did not hold).

#include <iostream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>

#include "kmv/error.hpp"
#include "kmv/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kolmogorov/McKean-Vlasov scenario runner"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config, preset, out_dir = "kmv_out";
  long long seed = -1;
  int threads = 0;
  bool b_zero = false;
  app.add_option("--config", config, "INI scenario file");
  app.add_option("--preset", preset, "built-in scenario (kinetic-langevin, chain-3)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "override the scenario seed")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  const char* names[] = {"probe-schauder", "solve-fp",        "solve-kolmogorov", "zvonkin",
                         "simulate",       "martingale-test", "full-validate"};
  for (const char* n : names) {
    auto* sub = app.add_subcommand(n);
    if (std::string(n) == "solve-fp") sub->add_flag("--b-zero", b_zero, "solve with b = 0");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    if (!config.empty() && !preset.empty())
      KMV_THROW(kConfigError, "--config and --preset are mutually exclusive");
    kmv::Scenario sc = !config.empty() ? kmv::Scenario::Load(config)
                                       : kmv::Scenario::Preset(preset.empty() ? "kinetic-langevin" : preset);
    if (seed >= 0) sc.seed = static_cast<std::uint64_t>(seed);
    if (threads > 0) omp_set_num_threads(threads);

    kmv::RunOutput out(out_dir);
    const auto summary = kmv::run_scenario(sc, cmd, out, b_zero);
    std::cout << summary.dump(2) << '\n';
    return summary.value("ok", false) ? kExitOk : kExitNumerical;
  } catch (const kmv::Error& e) {
    std::cerr << "kmv " << cmd << ": " << e.what() << '\n';
    return e.kind() == kmv::ErrorKind::kConfigError ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "kmv " << cmd << ": " << e.what() << '\n';
    return kExitNumerical;
  }
}
