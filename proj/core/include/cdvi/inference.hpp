#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdvi/dataset.hpp"
#include "cdvi/math.hpp"
#include "cdvi/model.hpp"

namespace cdvi {

double diag_gaussian_log_pdf(const DiagonalGaussian& g, std::span<const double> z);

// Per-row density triple used by the likelihood/gap machinery: a proposal
// q(z|x,y,delta) and the unnormalized log target
//   log f(y|x,z) + log p(z)  (delta = 1)   /   log S(y|x,z) + log p(z)  (delta = 0).
class RowDensityModel {
 public:
  virtual ~RowDensityModel() = default;
  virtual int latent_dim() const = 0;
  virtual DiagonalGaussian proposal(std::span<const double> x, double y,
                                    int delta) const = 0;
  virtual double log_joint(std::span<const double> x, double y, int delta,
                           std::span<const double> z) const = 0;
};

// CD-CVAE adapter; the proposal is the eval-mode encoder unless overridden.
class CdCvaeRowModel : public RowDensityModel {
 public:
  using ProposalOverride =
      std::function<DiagonalGaussian(std::span<const double>, double, int)>;

  explicit CdCvaeRowModel(const CdCvaeModel& model,
                          ProposalOverride override_proposal = {})
      : model_(&model), override_(std::move(override_proposal)) {}

  int latent_dim() const override { return model_->d_z; }
  DiagonalGaussian proposal(std::span<const double> x, double y,
                            int delta) const override;
  double log_joint(std::span<const double> x, double y, int delta,
                   std::span<const double> z) const override;

 private:
  const CdCvaeModel* model_;
  ProposalOverride override_;
};

// Reference model for simulated data with the chain's conditional attached:
// proposal := the simulator's true posterior and target := h(y,delta|x) times
// that posterior, with h the closed-form linear-Gaussian marginal
// N(0, sqrt(2 + x^2)). Importance weights are constant by construction, so
// the inference gap of this model at its own posterior is exactly zero.
class SimOracleRowModel : public RowDensityModel {
 public:
  int latent_dim() const override { return 2; }
  DiagonalGaussian proposal(std::span<const double> x, double y,
                            int delta) const override;
  double log_joint(std::span<const double> x, double y, int delta,
                   std::span<const double> z) const override;
  // log h: marginal log density (delta = 1) or log survival (delta = 0).
  static double log_marginal(double x, double y, int delta);
};

// One-dimensional conjugate toy: decoder N(y; z, 1), prior N(0, 1), fixed
// proposal N(0.5, 1.5^2); the exact marginal is N(0, sqrt(2)).
class ConjugateToyModel : public RowDensityModel {
 public:
  int latent_dim() const override { return 1; }
  DiagonalGaussian proposal(std::span<const double>, double, int) const override;
  double log_joint(std::span<const double>, double y, int,
                   std::span<const double> z) const override;
  static double true_log_marginal(double y);
  // Proposal with the exact posterior N(y/2, 1/sqrt(2)) (zero-variance weights).
  static DiagonalGaussian exact_posterior(double y);
};

struct LoglikEstimate {
  double value = 0.0;
  double se = 0.0;
  double ess = 0.0;
  bool low_ess = false;  // effective sample size < 10
};

// Self-normalized log-space importance estimate log f_hat_M (or log S_hat_M)
// with a delta-method standard error. Consistent as M grows.
LoglikEstimate estimate_loglik(const RowDensityModel& model,
                               std::span<const double> x, double y, int delta,
                               int M, std::uint64_t seed);

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

// Monte Carlo estimate of the per-row multi-sample objective
// E[log f_hat_m] / E[log S_hat_k] over `replications` independent estimates.
McEstimate elbo_row_mc(const RowDensityModel& model, std::span<const double> x,
                       double y, int delta, int draws, long replications,
                       std::uint64_t seed);

struct EncoderKl {
  std::optional<double> e_kl;
  std::optional<double> c_kl;
  std::size_t n_event = 0;
  std::size_t n_censored = 0;
};

// Closed-form KL between the eval-mode encoder and the simulator's true
// posterior, averaged separately over event and censored rows. Requires
// latent ground truth; a side absent from the data reports nullopt.
EncoderKl encoder_kl(const CdCvaeModel& model, const SurvivalDataset& data,
                     std::span<const std::size_t> rows = {});

// Same metric for an arbitrary proposal (used with overridden encoders).
EncoderKl proposal_kl(const RowDensityModel& model, const SurvivalDataset& data,
                      std::span<const std::size_t> rows = {});

struct GapReport {
  std::optional<double> e_kl;
  std::optional<double> c_kl;
  double loglik_estimate = 0.0;
  double loglik_se = 0.0;
  double elbo_value = 0.0;
  double elbo_se = 0.0;
  double gap_estimate = 0.0;
  double gap_se = 0.0;
  int oracle_samples = 0;  // M
  std::size_t n_rows = 0;
  std::string to_json() const;
};

// Average per-row (L_hat - ELBO) with Monte Carlo standard errors; the ELBO
// side uses `elbo_replications` per row at the estimator's (m, k).
GapReport gap_report(const RowDensityModel& model, const SurvivalDataset& data,
                     std::span<const std::size_t> rows,
                     const EstimatorConfig& cfg, int M, std::uint64_t seed,
                     long elbo_replications = 1000, int threads = 0);

struct ScalingPoint {
  int m = 0;
  long replications = 0;
  double is_bias = 0.0;
  double is_bias_se = 0.0;
  double is_var = 0.0;
  double dvi_bias = 0.0;
  double dvi_bias_se = 0.0;
  double dvi_var = 0.0;
};

struct ScalingStudy {
  double true_value = 0.0;
  std::vector<ScalingPoint> points;
  double is_bias_slope = 0.0;   // log-log slope of |bias| vs m
  double is_var_slope = 0.0;    // log-log slope of variance vs m
  double dvi_bias_slope = 0.0;
  std::string to_json() const;
  std::string to_csv() const;
};

// Conjugate-toy bias/variance scaling of the IS and delta-method estimators.
// Replications per grid point scale with m (floor `min_replications`) so the
// top-of-grid bias stays resolvable above Monte Carlo noise.
ScalingStudy bias_variance_study(std::span<const int> m_grid,
                                 long min_replications, std::uint64_t seed,
                                 int threads = 0);

struct MonotonicityStudy {
  std::vector<int> m_grid;
  std::vector<int> k_grid;
  // cell estimate/se for ELBO-C_{m,k}; event/censored parts enter with their
  // row proportions.
  std::vector<std::vector<double>> estimate;
  std::vector<std::vector<double>> se;
  struct Diff {
    int from = 0;
    int to = 0;
    double diff = 0.0;
    double se = 0.0;
  };
  std::vector<Diff> m_diffs;  // paired differences along the m axis
  std::vector<Diff> k_diffs;
  bool nondecreasing_m = true;  // every step >= -2 paired se
  bool nondecreasing_k = true;
  std::string to_csv() const;
};

// Common-random-number estimates of ELBO-C_{m,k} on fixed rows: each
// replication draws max(grid) z's per row and evaluates every grid value on
// prefixes, so the axis differences are positively coupled.
MonotonicityStudy monotonicity_study(const RowDensityModel& model,
                                     const SurvivalDataset& data,
                                     std::span<const std::size_t> rows,
                                     std::span<const int> m_grid,
                                     std::span<const int> k_grid,
                                     long replications, std::uint64_t seed,
                                     int threads = 0);

// Density slices over a 2-d latent grid at (x0, y0): encoder for delta = 1/0,
// the local-frequency delta-marginalized mixture, and the true posterior
// columns. Returns CSV text.
std::string posterior_slice_csv(const CdCvaeModel& model,
                                const SurvivalDataset& data, double x0,
                                double y0, std::span<const double> z_axis,
                                int knn = 50);

// Deterministic block-parallel loop: `blocks` fixed work blocks distributed
// over `threads` threads (0 = hardware concurrency). Results must be merged
// by block index to stay thread-count independent.
void parallel_blocks(int blocks, int threads,
                     const std::function<void(int)>& run_block);

}  // namespace cdvi
