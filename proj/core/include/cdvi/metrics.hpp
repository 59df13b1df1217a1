#pragma once

#include <span>
#include <string>
#include <vector>

namespace cdvi {

// Right-continuous product-limit step function: value 1 below the first jump.
struct StepSurvival {
  std::vector<double> jump_times;  // strictly increasing
  std::vector<double> values;      // value on [jump_times[i], jump_times[i+1])

  double at(double t) const;
  double left_limit(double t) const;  // value just before t
};

// Kaplan-Meier estimator. target_censoring = true flips indicators so the
// censoring distribution is estimated (delta = 0 treated as the event).
StepSurvival kaplan_meier(std::span<const double> times,
                          std::span<const int> events,
                          bool target_censoring = false);

// Harrell-style concordance at one evaluation time: ordered comparable pairs
// (i, j), i != j, with delta_i = 1 and y_i <= y_j; predictions are survival
// probabilities (lower = higher risk). Ties in predictions count 1/2.
// Throws "no comparable pairs" when the comparable set is empty.
double c_index(std::span<const double> predicted_survival,
               std::span<const double> times, std::span<const int> events);

// Mean of c_index over the 10th..100th percentiles of event times, with the
// risk matrix column per quantile (rows x 10, row-major). Requires >= 10
// event rows.
double c_index_quantile_avg(std::span<const double> risk_matrix,
                            std::span<const double> times,
                            std::span<const int> events);

struct CtdResult {
  double value = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_dropped = 0;  // pairs with exhausted censoring support
};

// Truncated time-dependent concordance with IPCW weights 1/S_C(y_i-)^2 over
// comparable pairs restricted to y_i <= tau. Pairs whose weight would divide
// by S_C = 0 are dropped and counted.
CtdResult c_td_ipcw(std::span<const double> predicted_survival,
                    std::span<const double> times, std::span<const int> events,
                    double tau);

// IPCW Brier score at time t:
//   (1/n) sum_i [ 1(y_i <= t, d_i = 1) S_hat(t|x_i)^2 / S_C(y_i-)
//               + 1(y_i > t) (1 - S_hat(t|x_i))^2 / S_C(t) ].
// Throws "censoring support exhausted" when S_C(t) = 0 with rows past t.
double brier_ipcw(std::span<const double> predicted_survival,
                  std::span<const double> times, std::span<const int> events,
                  double t);

// JSON report {metric, time(s), value, n or n_pairs, warnings}.
std::string metric_report_json(const std::string& metric, double time,
                               double value, std::size_t n,
                               const std::vector<std::string>& warnings = {});

}  // namespace cdvi
