#include "cdvi/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdvi {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
}  // namespace

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("log_sum_exp: empty reduction");
  }
  double hi = -kInf;
  for (double v : values) hi = std::max(hi, v);
  if (std::isinf(hi) && hi < 0) return -kInf;  // all entries -inf
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double std_normal_log_pdf(double s) { return -0.5 * s * s - kHalfLogTwoPi; }

double std_normal_log_survival(double s) {
  if (s < 0.0) {
    // log(1 - Phi(s)) = log1p(-Phi(s)) with Phi from the accurate lower tail,
    // so the result stays strictly negative down to s ~ -38.
    return std::log1p(-0.5 * std::erfc(-s / kSqrt2));
  }
  if (s <= kGaussianTailHandoff) {
    // erfc underflows only past s ~ 37.5, well beyond the handoff.
    return std::log(0.5 * std::erfc(s / kSqrt2));
  }
  // 1 - Phi(s) = phi(s)/s * (1 - 1/s^2 + 3/s^4 - 15/s^6 + O(s^-8))
  const double r2 = 1.0 / (s * s);
  const double series = -r2 + 3.0 * r2 * r2 - 15.0 * r2 * r2 * r2;
  return std_normal_log_pdf(s) - std::log(s) + std::log1p(series);
}

double std_normal_hazard(double s) {
  return std::exp(std_normal_log_pdf(s) - std_normal_log_survival(s));
}

double std_log_pdf(Family family, double t) {
  if (family == Family::kGaussian) {
    return -0.5 * t * t - kHalfLogTwoPi;
  }
  return t - std::exp(std::min(t, kGumbelExpCap));
}

double std_log_survival(Family family, double t) {
  if (family == Family::kGaussian) {
    return std_normal_log_survival(t);
  }
  if (t > kGumbelExpCap) return -kInf;
  return -std::exp(t);
}

namespace {
void check_scale(double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("nonpositive scale");
  }
}
}  // namespace

double log_pdf(Family family, double y, double mu, double sigma) {
  check_scale(sigma);
  const double t = (y - mu) / sigma;
  return std_log_pdf(family, t) - std::log(sigma);
}

double log_survival(Family family, double y, double mu, double sigma) {
  check_scale(sigma);
  return std_log_survival(family, (y - mu) / sigma);
}

double kl_diag_gaussian(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (q.dim() != p.dim() || q.log_scale.size() != q.mean.size() ||
      p.log_scale.size() != p.mean.size()) {
    throw std::invalid_argument("kl_diag_gaussian: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < q.dim(); ++j) {
    const double log_ratio = p.log_scale[j] - q.log_scale[j];
    const double var_q = std::exp(2.0 * q.log_scale[j]);
    const double var_p = std::exp(2.0 * p.log_scale[j]);
    const double dmu = q.mean[j] - p.mean[j];
    kl += log_ratio + (var_q + dmu * dmu) / (2.0 * var_p) - 0.5;
  }
  return kl;
}

double quantile(std::span<const double> values, double p) {
  if (values.empty()) {
    throw std::invalid_argument("quantile: empty sample");
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  p = std::clamp(p, 0.0, 1.0);
  const double h = static_cast<double>(v.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace cdvi
