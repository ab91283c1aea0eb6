#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "kmv/error.hpp"
#include "kmv/scenario.hpp"

using namespace kmv;

TEST_CASE("shipped presets parse") {
  Scenario k = Scenario::Preset("kinetic-langevin");
  CHECK(k.name == "kinetic-langevin");
  CHECK(k.model().N() == 2);
  CHECK(k.grid().points() == std::vector<int>{256, 256});
  CHECK(k.beta == 0.3);
  CHECK(k.epsilon == 0.2);
  CHECK(k.nonlinearity == "rational");
  Scenario c = Scenario::Preset("chain-3");
  CHECK(c.model().blocks.dims == std::vector<int>{1, 1, 1});
  CHECK(c.grid().points() == std::vector<int>{64, 64, 64});
}

TEST_CASE("config errors name the key") {
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[problem]\nbeta = 0.6\n"),
                       doctest::Contains("beta must lie in (0, 1/2)"), Error);
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[problem]\nepsilon = 0.5\n"), doctest::Contains("problem.epsilon"), Error);
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[fp]\nn_tt = 3\n"), doctest::Contains("fp.n_tt: unknown key"), Error);
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[grid]\npoints = 64 x\n"), doctest::Contains("grid.points"), Error);
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[grid]\npoints = 64 64 64\n"), doctest::Contains("grid.points"), Error);
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[drift]\nsource = file\nfile = /nonexistent.gfd\n"),
                       doctest::Contains("drift.file"), Error);
  CHECK_THROWS_WITH_AS(Scenario::Preset("no-such-preset"), doctest::Contains("unknown preset"), Error);
  CHECK_THROWS_WITH_AS(Scenario::FromIni("[simulation]\ndrift_upsample = 8\n"),
                       doctest::Contains("simulation.drift_upsample: refined drift needs"), Error);
  try {
    Scenario::FromIni("[problem]\nbeta = 0.6\n");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfigError);
  }
}

TEST_CASE("resolved config lists every default") {
  Scenario s = Scenario::FromIni("[problem]\nbeta = 0.25\n");
  auto j = s.to_json();
  CHECK(j["problem"]["beta"] == 0.25);
  CHECK(j["fp"]["n_t"] == 64);
  CHECK(j["martingale"]["pairs"].size() == 2);
  for (const char* sec : {"scenario", "model", "grid", "initial", "problem", "drift", "fp", "kolmogorov", "schauder",
                          "simulation", "martingale"})
    CHECK(j.contains(sec));
}

TEST_CASE("initial density is a probability density") {
  Scenario s = Scenario::Preset("kinetic-langevin");
  s.points = {64, 64};
  GridField u0 = s.initial_density(s.grid());
  CHECK(u0.integral() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(u0.min() >= 0.0);
}

TEST_CASE("identical config gives identical manifest checksums") {
  namespace fs = std::filesystem;
  Scenario s = Scenario::FromIni("[grid]\npoints = 64 64\n[schauder]\npoints = 1024 2\nsamples = 3\n[fp]\nn_t = 8\n",
                                 "small");
  const fs::path base = fs::temp_directory_path() / "kmv_manifest_test";
  fs::remove_all(base);
  auto read = [](const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
  };
  for (const char* run : {"a", "b"}) {
    RunOutput out((base / run).string());
    run_scenario(s, "solve-fp", out);
  }
  auto ma = read(base / "a" / "manifest.json"), mb = read(base / "b" / "manifest.json");
  CHECK(ma["files"] == mb["files"]);
  CHECK(ma["files"].size() >= 3);
  CHECK(ma["config"]["fp"]["n_t"] == 8);
  CHECK_FALSE(ma.contains("timing"));
  CHECK(fs::exists(base / "a" / "timing.json"));
  fs::remove_all(base);
}

TEST_CASE("sha256 of a known string") {
  const auto p = (std::filesystem::temp_directory_path() / "kmv_sha_test.txt").string();
  {
    std::ofstream o(p, std::ios::binary);
    o << "abc";
  }
  CHECK(sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::filesystem::remove(p);
}
