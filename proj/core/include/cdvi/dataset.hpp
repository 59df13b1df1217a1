#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdvi {

// Record of the fitted covariate/time transforms, sufficient to map
// predictions back to the original time scale.
struct TransformRecord {
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  bool standardized = false;
  bool log_time = false;  // y was log-transformed before standardizing
  double y_mean = 0.0;
  double y_std = 1.0;

  double to_model_time(double t_original) const;
  double to_original_time(double t_model) const;
};

// Per-row simulator ground truth (empty vectors when absent).
struct LatentTruth {
  std::vector<double> z1;
  std::vector<double> z2;
  std::vector<double> u;
  std::vector<double> c;
};

struct SurvivalDataset {
  int d_x = 0;
  std::vector<std::string> feature_names;
  std::vector<double> x;  // row-major, size() * d_x
  std::vector<double> y;
  std::vector<int> event;  // delta in {0,1}
  TransformRecord transform;
  LatentTruth truth;

  std::size_t size() const { return y.size(); }
  bool has_truth() const { return !truth.z1.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * static_cast<std::size_t>(d_x),
            static_cast<std::size_t>(d_x)};
  }
  double censor_rate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Comma-separated, first line header, UTF-8 decimal floats. The time and
// event columns are selected by name; every other column becomes a covariate
// in header order. Event values must be 0 or 1.
SurvivalDataset load_csv(const std::filesystem::path& path,
                         const std::string& time_column,
                         const std::string& event_column);

void save_csv(const SurvivalDataset& ds, const std::filesystem::path& path,
              const std::string& time_column = "time",
              const std::string& event_column = "event");

// Sidecar with columns z1,z2,u,c, aligned with the data CSV rows.
void save_truth_csv(const SurvivalDataset& ds,
                    const std::filesystem::path& path);

// Seeded uniform shuffle, then cuts at floor(0.6 n) and floor(0.8 n).
// Requires n >= 5.
SplitIndices split(const SurvivalDataset& ds, std::uint64_t seed);

// Centers/scales covariates with statistics from fit_indices only; optionally
// log-transforms y first, then standardizes it the same way. Throws on
// zero-variance features, naming the feature.
SurvivalDataset standardize(const SurvivalDataset& ds,
                            std::span<const std::size_t> fit_indices,
                            bool log_time);

// JSON summary: n, d_x, censor rate, time quantiles.
std::string summary_json(const SurvivalDataset& ds);

}  // namespace cdvi
