#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cdvi/dataset.hpp"
#include "cdvi/math.hpp"

namespace cdvi {

enum class ForceMode { kNone, kAllEvent, kAllCensor };

struct SimConfig {
  int n = 10000;            // post-burn-in sample count
  double mu_c = 5.5;        // censoring mean
  double sigma_u = 1.0;     // event noise std
  double sigma_c = 7.1;     // censoring std, calibrated against the preset
                            // censor rates {5, 20, 30, 50}%
  int burn_in = 10000;
  std::uint64_t seed = 0;
  ForceMode force_mode = ForceMode::kNone;

  std::string to_json() const;
  static SimConfig from_json(const std::string& text);
};

// Mean of the conditional z-posterior; both coordinates share it. The
// exponent is saturated at zero so the chain's feedback loop stays bounded.
double posterior_mean_coord(double x, double y, int delta);

// P(Z | X=x, Y=y, delta): diagonal Gaussian with identity covariance,
// mean (2*delta - 1) * 3 * exp(-max(x + y, 0)) in both coordinates.
DiagonalGaussian true_posterior(double x, double y, int delta);

// Single-chain Gibbs generator. Per step: x ~ N(1,1); u ~ N(z1 + x z2,
// sigma_u^2); c ~ N(mu_c, sigma_c^2); (y, delta) = (min(u,c), 1[u <= c])
// unless forced; then z ~ N(posterior mean, I). The first burn_in draws are
// discarded. Rows carry (z, u, c) as latent ground truth.
SurvivalDataset gibbs_simulate(const SimConfig& config);

// Presets sd1..sd6: censor rates {0, 5, 20, 30, 50, 100}%. sd1/sd6 are the
// forced all-event / all-censored variants.
SimConfig sim_preset(std::string_view name, int n = 10000,
                     std::uint64_t seed = 0);

}  // namespace cdvi
