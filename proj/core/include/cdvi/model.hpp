#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdvi/dataset.hpp"
#include "cdvi/math.hpp"
#include "cdvi/nn.hpp"
#include "cdvi/rng.hpp"
#include "cdvi/tape.hpp"

namespace cdvi {

enum class Objective { kVanilla, kElboC, kIs, kDvi };

Objective objective_from_name(std::string_view name);
std::string_view objective_name(Objective o);

struct EstimatorConfig {
  Objective objective = Objective::kElboC;
  int m = 1;
  int k = 1;
  double temperature = 1.0;  // multiplies the censored summand only

  void validate() const;
};

enum class ValidationMetric { kElbo, kCIndex };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 100;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
  ValidationMetric validation_metric = ValidationMetric::kElbo;
};

// Censor-dependent conditional VAE. One encoder network maps (x, y, delta)
// to a diagonal Gaussian over z, realizing the event/censored variational
// pair as a partition by the delta input. The decoder maps (x, z) to the
// location of a location-scale family whose global scale is exp(log_sigma).
// The latent prior is the standard Gaussian (z independent of x).
struct CdCvaeModel {
  Family family = Family::kGaussian;
  int d_x = 1;
  int d_z = 2;
  ad::MlpSpec encoder_spec;
  ad::MlpSpec decoder_spec;
  ad::ParameterStore params;
  ad::MlpHandle enc;
  ad::MlpHandle dec;
  int log_sigma_id = -1;

  double sigma() const;

  static CdCvaeModel make(int d_x, int d_z, std::vector<int> hidden,
                          Family family, std::uint64_t seed,
                          ad::Activation activation = ad::Activation::kTanh,
                          double dropout = 0.0);
};

struct BatchView {
  const SurvivalDataset* data = nullptr;
  std::span<const std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

// Number of standard-normal draws build_objective consumes for this batch.
std::size_t eps_count(const CdCvaeModel& model, const BatchView& batch,
                      const EstimatorConfig& cfg);

// Builds the scalar objective node (mean over the batch) for one of the four
// objectives. `eps` supplies all reparameterization noise, so a fixed vector
// replays the same stochastic objective (the finite-difference contract).
// Throws std::runtime_error naming the row on a non-finite per-row term.
ad::Tape::Id build_objective(ad::Tape& tape, CdCvaeModel& model,
                             const BatchView& batch, const EstimatorConfig& cfg,
                             std::span<const double> eps, bool train_mode = false,
                             Rng* dropout_rng = nullptr);

// Convenience wrappers around one tape use.
double objective_value(CdCvaeModel& model, const BatchView& batch,
                       const EstimatorConfig& cfg, std::span<const double> eps);
double objective_backward(CdCvaeModel& model, const BatchView& batch,
                          const EstimatorConfig& cfg,
                          std::span<const double> eps, bool train_mode = false,
                          Rng* dropout_rng = nullptr);

// Eval-mode encoder pass; throws "encoder divergence" on non-finite output.
DiagonalGaussian encode(const CdCvaeModel& model, std::span<const double> x,
                        double y, int delta);

// z = mean + exp(log_scale) * eps, `count` draws concatenated.
std::vector<double> reparameterized_draws(const DiagonalGaussian& q, int count,
                                          Rng& rng);

double decoder_location(const CdCvaeModel& model, std::span<const double> x,
                        std::span<const double> z);
double log_f(const CdCvaeModel& model, double y, std::span<const double> x,
             std::span<const double> z);
double log_s(const CdCvaeModel& model, double y, std::span<const double> x,
             std::span<const double> z);

// Analytic derivative of the batch-mean censor-dependent objective with
// respect to sigma at fixed latent draws (one draw per row, row-major).
// Serves as the oracle for the autodiff sigma gradient via
// d/dlog_sigma = sigma * d/dsigma.
double d_elbo_c_d_sigma(const CdCvaeModel& model, const BatchView& batch,
                        std::span<const double> z_draws, double temperature = 1.0);

// Monte Carlo marginal survival S(t | x) = E_{z ~ p(z)} S(t | x, z) with the
// prior draws shared across all t (monotone nonincreasing output).
std::vector<double> predict_survival(const CdCvaeModel& model,
                                     std::span<const double> x,
                                     std::span<const double> ts,
                                     int n_prior_samples, std::uint64_t seed);

struct EpochStats {
  int epoch = 0;
  double train_objective = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val = 0.0;
};

// Minibatch ascent on the chosen objective with best-validation snapshotting
// and patience-based early stopping. Deterministic for a fixed seed.
// `on_epoch` (optional) runs after each epoch's validation pass.
TrainResult train(CdCvaeModel& model, const SurvivalDataset& data,
                  const SplitIndices& split, const EstimatorConfig& est,
                  const TrainConfig& cfg,
                  const std::function<void(const CdCvaeModel&, int)>& on_epoch = {});

// Ten-quantile average C-index of model predictions over the given rows.
double model_c_index(const CdCvaeModel& model, const SurvivalDataset& data,
                     std::span<const std::size_t> rows, int n_prior_samples = 200,
                     std::uint64_t seed = 1234);

// Checkpoint: parameters plus enough metadata to rebuild the model and the
// data transforms. `extra` is merged into the metadata object.
void save_model(const CdCvaeModel& model, const TransformRecord& transform,
                std::uint64_t split_seed, const std::string& extra_json,
                const std::filesystem::path& path);
CdCvaeModel load_model(const std::filesystem::path& path,
                       TransformRecord* transform = nullptr,
                       std::uint64_t* split_seed = nullptr,
                       std::string* extra_json = nullptr);

}  // namespace cdvi
