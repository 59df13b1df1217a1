#pragma once

#include <span>
#include <vector>

namespace cdvi {

// Location-scale noise family of the decoder. Gaussian noise corresponds to a
// log-normal accelerated-failure-time model on the positive time scale,
// Gumbel-minimum noise to a Weibull one.
enum class Family { kGaussian, kGumbelMin };

// Factored Gaussian over the latent space: independent coordinates with
// per-coordinate mean and log standard deviation.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> log_scale;

  std::size_t dim() const { return mean.size(); }

  static DiagonalGaussian standard(std::size_t d) {
    return {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  }
};

// log sum_i exp(v[i]) via the max-shift. Entries may be -inf; at least one
// entry must be present. Exact for equal entries, never overflows for
// entries <= 700.
double log_sum_exp(std::span<const double> values);

// Standardized log density / log survival of the two families, as functions
// of t = (y - mu) / sigma.
double std_log_pdf(Family family, double t);
double std_log_survival(Family family, double t);

// Standard normal helpers.
double std_normal_log_pdf(double s);
// log(1 - Phi(s)), stable across the whole double range: erfc path up to the
// tail handoff, 4-term asymptotic series beyond.
double std_normal_log_survival(double s);
// Hazard phi(s) / (1 - Phi(s)) = 1 / Mill's ratio.
double std_normal_hazard(double s);

// Location-scale log density and log survival. Throws std::invalid_argument
// ("nonpositive scale") when sigma <= 0.
double log_pdf(Family family, double y, double mu, double sigma);
double log_survival(Family family, double y, double mu, double sigma);

// KL(q || p) between diagonal Gaussians of equal dimension; >= 0 with
// equality iff q == p componentwise. Throws on dimension mismatch.
double kl_diag_gaussian(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Linear-interpolation quantile (R type 7) of an unsorted sample, p in [0,1].
double quantile(std::span<const double> values, double p);

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kHalfLogTwoPi = 0.5 * kLogTwoPi;

// Exponent where the Gaussian log-survival switches from erfc to the
// asymptotic tail series; the series' truncation error there is below 1e-9.
inline constexpr double kGaussianTailHandoff = 25.0;

// Gumbel-minimum exponent cap: beyond it exp overflows, log survival is -inf.
inline constexpr double kGumbelExpCap = 700.0;

}  // namespace cdvi
