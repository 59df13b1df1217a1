#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cdvi/simulator.hpp"

using namespace cdvi;

TEST_CASE("true_posterior reference points") {
  const auto q1 = true_posterior(1.0, 0.0, 1);
  CHECK(q1.mean[0] == doctest::Approx(1.1036383235143269).epsilon(1e-12));
  CHECK(q1.mean[1] == doctest::Approx(1.1036383235143269).epsilon(1e-12));
  CHECK(q1.log_scale[0] == 0.0);
  CHECK(q1.log_scale[1] == 0.0);

  const auto q0 = true_posterior(1.0, 0.0, 0);
  CHECK(q0.mean[0] == doctest::Approx(-1.1036383235143269).epsilon(1e-12));

  // Mean vanishes as x + y grows.
  const auto far = true_posterior(20.0, 20.0, 1);
  CHECK(std::abs(far.mean[0]) < 1e-15);
}

TEST_CASE("true_posterior delta-sign symmetry is exact") {
  for (double x : {-2.0, 0.0, 1.0, 3.5}) {
    for (double y : {-10.0, -1.0, 0.0, 2.0, 15.0}) {
      const auto a = true_posterior(x, y, 1);
      const auto b = true_posterior(x, y, 0);
      CHECK(a.mean[0] == -b.mean[0]);
      CHECK(a.mean[1] == -b.mean[1]);
    }
  }
}

TEST_CASE("simulator determinism") {
  auto cfg = sim_preset("sd4", 200, 77);
  cfg.burn_in = 50;
  const auto a = gibbs_simulate(cfg);
  const auto b = gibbs_simulate(cfg);
  CHECK(a.y == b.y);
  CHECK(a.x == b.x);
  CHECK(a.event == b.event);
  CHECK(a.truth.z1 == b.truth.z1);
}

TEST_CASE("rows satisfy the min/indicator invariant") {
  auto cfg = sim_preset("sd4", 500, 3);
  cfg.burn_in = 100;
  const auto ds = gibbs_simulate(cfg);
  REQUIRE(ds.has_truth());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double u = ds.truth.u[i];
    const double c = ds.truth.c[i];
    CHECK(ds.y[i] == std::min(u, c));
    CHECK(ds.event[i] == (u <= c ? 1 : 0));
  }
}

TEST_CASE("force modes") {
  auto cfg = sim_preset("sd1", 300, 5);
  cfg.burn_in = 100;
  const auto ev = gibbs_simulate(cfg);
  CHECK(ev.censor_rate() == 0.0);
  for (std::size_t i = 0; i < ev.size(); ++i) CHECK(ev.y[i] == ev.truth.u[i]);

  auto cfg6 = sim_preset("sd6", 300, 5);
  cfg6.burn_in = 100;
  const auto ce = gibbs_simulate(cfg6);
  CHECK(ce.censor_rate() == 1.0);
  for (std::size_t i = 0; i < ce.size(); ++i) CHECK(ce.y[i] == ce.truth.c[i]);
}

TEST_CASE("preset censor rates match the targets") {
  // Population censor rates {5, 20, 30, 50}% within +-1.5 points.
  const struct {
    const char* name;
    double target;
  } cases[] = {{"sd2", 0.05}, {"sd3", 0.20}, {"sd4", 0.30}, {"sd5", 0.50}};
  for (const auto& c : cases) {
    const auto ds = gibbs_simulate(sim_preset(c.name, 10000, 42));
    CHECK(std::abs(ds.censor_rate() - c.target) < 0.015);
  }
}

TEST_CASE("x marginal is N(1,1)") {
  SimConfig cfg = sim_preset("sd4", 100000, 9);
  const auto ds = gibbs_simulate(cfg);
  double m = 0.0;
  for (double v : ds.x) m += v;
  m /= static_cast<double>(ds.size());
  double var = 0.0;
  for (double v : ds.x) var += (v - m) * (v - m);
  var /= static_cast<double>(ds.size());
  CHECK(std::abs(m - 1.0) < 0.02);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 0.02);
}

TEST_CASE("config json round trip and validation") {
  SimConfig cfg = sim_preset("sd5", 123, 9);
  cfg.force_mode = ForceMode::kAllCensor;
  const auto back = SimConfig::from_json(cfg.to_json());
  CHECK(back.n == cfg.n);
  CHECK(back.mu_c == cfg.mu_c);
  CHECK(back.sigma_c == cfg.sigma_c);
  CHECK(back.force_mode == cfg.force_mode);

  CHECK_THROWS_AS(sim_preset("sd7", 10, 0), std::invalid_argument);
  SimConfig bad;
  bad.n = 0;
  CHECK_THROWS_AS(gibbs_simulate(bad), std::invalid_argument);
}
