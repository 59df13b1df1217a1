#include "cdvi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "cdvi/math.hpp"

namespace cdvi {

double StepSurvival::at(double t) const {
  // Last jump with jump_times <= t.
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double StepSurvival::left_limit(double t) const {
  const auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

StepSurvival kaplan_meier(std::span<const double> times,
                          std::span<const int> events, bool target_censoring) {
  if (times.size() != events.size() || times.empty()) {
    throw std::invalid_argument("kaplan_meier: bad input");
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  StepSurvival s;
  double surv = 1.0;
  std::size_t at_risk = times.size();
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = times[order[i]];
    std::size_t deaths = 0;
    std::size_t leaving = 0;
    while (i < order.size() && times[order[i]] == t) {
      const int d = events[order[i]];
      const bool is_event = target_censoring ? d == 0 : d == 1;
      deaths += is_event ? 1 : 0;
      ++leaving;
      ++i;
    }
    if (deaths > 0) {
      surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      s.jump_times.push_back(t);
      s.values.push_back(surv);
    }
    at_risk -= leaving;
  }
  return s;
}

double c_index(std::span<const double> predicted_survival,
               std::span<const double> times, std::span<const int> events) {
  const std::size_t n = times.size();
  if (predicted_survival.size() != n || events.size() != n) {
    throw std::invalid_argument("c_index: size mismatch");
  }
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (events[i] != 1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || times[i] > times[j]) continue;
      ++pairs;
      if (predicted_survival[i] < predicted_survival[j]) {
        num += 1.0;
      } else if (predicted_survival[i] == predicted_survival[j]) {
        num += 0.5;
      }
    }
  }
  if (pairs == 0) throw std::runtime_error("no comparable pairs");
  return num / static_cast<double>(pairs);
}

double c_index_quantile_avg(std::span<const double> risk_matrix,
                            std::span<const double> times,
                            std::span<const int> events) {
  const std::size_t n = times.size();
  if (risk_matrix.size() != n * 10) {
    throw std::invalid_argument("c_index_quantile_avg: need n x 10 risk matrix");
  }
  std::size_t n_events = 0;
  for (int d : events) n_events += d == 1 ? 1 : 0;
  if (n_events < 10) {
    throw std::runtime_error("c_index_quantile_avg: fewer than 10 events");
  }
  std::vector<double> col(n);
  double acc = 0.0;
  for (std::size_t q = 0; q < 10; ++q) {
    for (std::size_t i = 0; i < n; ++i) col[i] = risk_matrix[i * 10 + q];
    acc += c_index(col, times, events);
  }
  return acc / 10.0;
}

CtdResult c_td_ipcw(std::span<const double> predicted_survival,
                    std::span<const double> times, std::span<const int> events,
                    double tau) {
  const std::size_t n = times.size();
  if (predicted_survival.size() != n || events.size() != n) {
    throw std::invalid_argument("c_td_ipcw: size mismatch");
  }
  const StepSurvival sc = kaplan_meier(times, events, /*target_censoring=*/true);
  double num = 0.0;
  double den = 0.0;
  CtdResult r;
  for (std::size_t i = 0; i < n; ++i) {
    if (events[i] != 1 || times[i] > tau) continue;
    const double sci = sc.left_limit(times[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || times[i] > times[j]) continue;
      if (sci <= 0.0) {
        ++r.n_dropped;
        continue;
      }
      const double w = 1.0 / (sci * sci);
      ++r.n_pairs;
      den += w;
      if (predicted_survival[i] < predicted_survival[j]) {
        num += w;
      } else if (predicted_survival[i] == predicted_survival[j]) {
        num += 0.5 * w;
      }
    }
  }
  if (r.n_pairs == 0) throw std::runtime_error("no comparable pairs");
  r.value = num / den;
  return r;
}

double brier_ipcw(std::span<const double> predicted_survival,
                  std::span<const double> times, std::span<const int> events,
                  double t) {
  const std::size_t n = times.size();
  if (predicted_survival.size() != n || events.size() != n) {
    throw std::invalid_argument("brier_ipcw: size mismatch");
  }
  const StepSurvival sc = kaplan_meier(times, events, /*target_censoring=*/true);
  const double sct = sc.at(t);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s_hat = predicted_survival[i];
    if (times[i] <= t && events[i] == 1) {
      const double w = sc.left_limit(times[i]);
      if (w <= 0.0) throw std::runtime_error("censoring support exhausted");
      acc += s_hat * s_hat / w;
    } else if (times[i] > t) {
      if (sct <= 0.0) throw std::runtime_error("censoring support exhausted");
      acc += (1.0 - s_hat) * (1.0 - s_hat) / sct;
    }
    // Rows censored at or before t contribute zero.
  }
  return acc / static_cast<double>(n);
}

std::string metric_report_json(const std::string& metric, double time,
                               double value, std::size_t n,
                               const std::vector<std::string>& warnings) {
  nlohmann::json j;
  j["metric"] = metric;
  j["time"] = time;
  j["value"] = value;
  j["n"] = n;
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace cdvi
