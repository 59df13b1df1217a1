// End-to-end checks of the cdvi binary (path injected by the build).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cdvi/dataset.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kBin = CDVI_BINARY_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cdvi_cli_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  const std::string cmd = kBin.string() + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("simulate writes data, latents, config, summary, manifest") {
  TempDir tmp;
  const auto out = tmp.path / "sd4";
  REQUIRE(run("simulate --preset sd4 --n 400 --burn-in 200 --seed 3 --out " +
              out.string()) == 0);
  CHECK(fs::exists(out / "data.csv"));
  CHECK(fs::exists(out / "latents.csv"));
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(slurp(out / "config.json").find("\"mu_c\": 5.5") != std::string::npos);
}

TEST_CASE("simulate without output or with a bad preset fails") {
  TempDir tmp;
  CHECK(run("simulate --preset sd4") != 0);
  CHECK(run("simulate --preset nope --out " + (tmp.path / "x").string()) != 0);
}

TEST_CASE("train is reproducible byte for byte and eval runs the metrics") {
  TempDir tmp;
  const auto data_dir = tmp.path / "data";
  REQUIRE(run("simulate --preset sd4 --n 600 --burn-in 300 --seed 7 --out " +
              data_dir.string()) == 0);
  const std::string data = (data_dir / "data.csv").string();

  const std::string train_flags =
      "train --data " + data +
      " --objective elbo-c --seed 5 --epochs 6 --patience 6 --lr 0.01 "
      "--hidden 8 --out ";
  REQUIRE(run(train_flags + (tmp.path / "a").string()) == 0);
  REQUIRE(run(train_flags + (tmp.path / "b").string()) == 0);
  CHECK(slurp(tmp.path / "a" / "history.csv") ==
        slurp(tmp.path / "b" / "history.csv"));
  CHECK(slurp(tmp.path / "a" / "history.csv").find("elbo_c") !=
        std::string::npos);

  REQUIRE(run("eval --checkpoint " + (tmp.path / "a" / "checkpoint.json").string() +
              " --data " + data + " --metrics c,ctd,brier --prior-samples 50 --out " +
              (tmp.path / "ev").string()) == 0);
  const auto metrics = slurp(tmp.path / "ev" / "metrics.json");
  CHECK(metrics.find("c_index_quantile_avg") != std::string::npos);
  CHECK(metrics.find("c_td_ipcw") != std::string::npos);
  CHECK(metrics.find("brier_ipcw") != std::string::npos);

  CHECK(run("eval --checkpoint " + (tmp.path / "a" / "checkpoint.json").string() +
            " --data " + data + " --metrics c,bogus --out " +
            (tmp.path / "ev2").string()) != 0);
}

TEST_CASE("is history carries the estimator name; dvi rejects m < 2") {
  TempDir tmp;
  const auto data_dir = tmp.path / "data";
  REQUIRE(run("simulate --preset sd3 --n 400 --burn-in 200 --seed 2 --out " +
              data_dir.string()) == 0);
  const std::string data = (data_dir / "data.csv").string();
  REQUIRE(run("train --data " + data +
              " --objective is --m 4 --k 4 --seed 1 --epochs 2 --patience 2 "
              "--hidden 6 --out " +
              (tmp.path / "is").string()) == 0);
  CHECK(slurp(tmp.path / "is" / "history.csv").find("elbo_c_is") !=
        std::string::npos);
  CHECK(run("train --data " + data +
            " --objective dvi --m 1 --k 4 --seed 1 --epochs 2 --out " +
            (tmp.path / "bad").string()) != 0);
}

TEST_CASE("config file drives a run; unknown keys are rejected; flags win") {
  TempDir tmp;
  const auto out = tmp.path / "sim";
  {
    std::ofstream cfg(tmp.path / "sim.json");
    cfg << R"({"preset": "sd2", "n": 300, "burn_in": 100, "seed": 4})";
  }
  REQUIRE(run("simulate --config " + (tmp.path / "sim.json").string() +
              " --seed 9 --out " + out.string()) == 0);
  // Flag seed overrode the config seed.
  CHECK(slurp(out / "config.json").find("\"seed\": 9") != std::string::npos);

  {
    std::ofstream cfg(tmp.path / "bad.json");
    cfg << R"({"preset": "sd2", "bogus_key": 1})";
  }
  CHECK(run("simulate --config " + (tmp.path / "bad.json").string() + " --out " +
            (tmp.path / "y").string()) != 0);
}

TEST_CASE("gap with the true-posterior override reports a null gap") {
  TempDir tmp;
  const auto data_dir = tmp.path / "data";
  REQUIRE(run("simulate --preset sd4 --n 300 --burn-in 300 --seed 11 --out " +
              data_dir.string()) == 0);
  REQUIRE(run("gap --data " + (data_dir / "data.csv").string() + " --truth " +
              (data_dir / "latents.csv").string() +
              " --encoder-override true-posterior --M 500 --rows 60 "
              "--elbo-replications 50 --out " +
              (tmp.path / "gap").string()) == 0);
  const auto text = slurp(tmp.path / "gap" / "gap.json");
  CHECK(text.find("\"e_kl\": 0.0") != std::string::npos);
  CHECK(text.find("\"c_kl\": 0.0") != std::string::npos);
}

TEST_CASE("risk-csv injection: a perfect oracle ranks at C = 1") {
  TempDir tmp;
  const auto data_dir = tmp.path / "data";
  REQUIRE(run("simulate --preset sd1 --n 200 --burn-in 100 --seed 13 --out " +
              data_dir.string()) == 0);
  const std::string data = (data_dir / "data.csv").string();
  REQUIRE(run("train --data " + data +
              " --objective elbo-c --seed 3 --epochs 2 --patience 2 --hidden 4 "
              "--out " +
              (tmp.path / "m").string()) == 0);

  // Build a risk CSV aligned with eval's test order (library split, seed 3)
  // whose survival values increase with the observed time: perfect ranking.
  const auto ds = cdvi::load_csv(data, "time", "event");
  const auto sp = cdvi::split(ds, 3);
  {
    std::ofstream risk(tmp.path / "risk.csv");
    risk << "q10,q20,q30,q40,q50,q60,q70,q80,q90,q100\n";
    double lo = 1e300, hi = -1e300;
    for (auto i : sp.test) {
      lo = std::min(lo, ds.y[i]);
      hi = std::max(hi, ds.y[i]);
    }
    for (auto i : sp.test) {
      const double s = (ds.y[i] - lo) / (hi - lo);
      for (int q = 0; q < 10; ++q) risk << s << (q == 9 ? '\n' : ',');
    }
  }
  REQUIRE(run("eval --checkpoint " + (tmp.path / "m" / "checkpoint.json").string() +
              " --data " + data + " --metrics c --risk-csv " +
              (tmp.path / "risk.csv").string() + " --out " +
              (tmp.path / "ev").string()) == 0);
  const auto metrics = slurp(tmp.path / "ev" / "metrics.json");
  CHECK(metrics.find("\"c_index_quantile_avg\": 1.0") != std::string::npos);
}
