#include "cdvi/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "cdvi/rng.hpp"

namespace cdvi {

std::string SimConfig::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["mu_c"] = mu_c;
  j["sigma_u"] = sigma_u;
  j["sigma_c"] = sigma_c;
  j["burn_in"] = burn_in;
  j["seed"] = seed;
  j["force_mode"] = force_mode == ForceMode::kNone        ? "none"
                    : force_mode == ForceMode::kAllEvent  ? "all_event"
                                                          : "all_censor";
  return j.dump(2);
}

SimConfig SimConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SimConfig c;
  c.n = j.value("n", c.n);
  c.mu_c = j.value("mu_c", c.mu_c);
  c.sigma_u = j.value("sigma_u", c.sigma_u);
  c.sigma_c = j.value("sigma_c", c.sigma_c);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.seed = j.value("seed", c.seed);
  const std::string fm = j.value("force_mode", "none");
  if (fm == "none") {
    c.force_mode = ForceMode::kNone;
  } else if (fm == "all_event") {
    c.force_mode = ForceMode::kAllEvent;
  } else if (fm == "all_censor") {
    c.force_mode = ForceMode::kAllCensor;
  } else {
    throw std::invalid_argument("unknown force_mode: " + fm);
  }
  return c;
}

double posterior_mean_coord(double x, double y, int delta) {
  const double sign = delta == 1 ? 1.0 : -1.0;
  return sign * 3.0 * std::exp(-std::max(x + y, 0.0));
}

DiagonalGaussian true_posterior(double x, double y, int delta) {
  const double m = posterior_mean_coord(x, y, delta);
  return DiagonalGaussian{{m, m}, {0.0, 0.0}};
}

SurvivalDataset gibbs_simulate(const SimConfig& config) {
  if (config.n <= 0) throw std::invalid_argument("simulate: n must be positive");
  if (!(config.sigma_u > 0.0) || !(config.sigma_c > 0.0)) {
    throw std::invalid_argument("simulate: scales must be positive");
  }
  if (config.burn_in < 0) throw std::invalid_argument("simulate: negative burn_in");

  SurvivalDataset ds;
  ds.d_x = 1;
  ds.feature_names = {"x"};
  ds.x.reserve(static_cast<std::size_t>(config.n));
  ds.y.reserve(static_cast<std::size_t>(config.n));
  ds.event.reserve(static_cast<std::size_t>(config.n));
  ds.truth.z1.reserve(static_cast<std::size_t>(config.n));
  ds.truth.z2.reserve(static_cast<std::size_t>(config.n));
  ds.truth.u.reserve(static_cast<std::size_t>(config.n));
  ds.truth.c.reserve(static_cast<std::size_t>(config.n));

  Rng rng(config.seed);
  double z1 = 0.0;
  double z2 = 0.0;
  const long total = static_cast<long>(config.burn_in) + config.n;
  for (long t = 0; t < total; ++t) {
    const double x = rng.normal(1.0, 1.0);
    const double u = rng.normal(z1 + x * z2, config.sigma_u);
    const double c = rng.normal(config.mu_c, config.sigma_c);
    double y;
    int delta;
    switch (config.force_mode) {
      case ForceMode::kAllEvent:
        y = u;
        delta = 1;
        break;
      case ForceMode::kAllCensor:
        y = c;
        delta = 0;
        break;
      default:
        delta = u <= c ? 1 : 0;
        y = delta == 1 ? u : c;
    }
    const double m = posterior_mean_coord(x, y, delta);
    z1 = rng.normal(m, 1.0);
    z2 = rng.normal(m, 1.0);
    if (t >= config.burn_in) {
      ds.x.push_back(x);
      ds.y.push_back(y);
      ds.event.push_back(delta);
      ds.truth.z1.push_back(z1);
      ds.truth.z2.push_back(z2);
      ds.truth.u.push_back(u);
      ds.truth.c.push_back(c);
    }
  }
  return ds;
}

SimConfig sim_preset(std::string_view name, int n, std::uint64_t seed) {
  SimConfig c;
  c.n = n;
  c.seed = seed;
  if (name == "sd1") {
    c.mu_c = 16.0;
    c.force_mode = ForceMode::kAllEvent;
  } else if (name == "sd2") {
    c.mu_c = 16.0;
  } else if (name == "sd3") {
    c.mu_c = 8.5;
  } else if (name == "sd4") {
    c.mu_c = 5.5;
  } else if (name == "sd5") {
    c.mu_c = 0.0;
  } else if (name == "sd6") {
    c.mu_c = 16.0;
    c.force_mode = ForceMode::kAllCensor;
  } else {
    throw std::invalid_argument(
        "unknown preset '" + std::string(name) +
        "' (valid: sd1, sd2, sd3, sd4, sd5, sd6)");
  }
  return c;
}

}  // namespace cdvi
