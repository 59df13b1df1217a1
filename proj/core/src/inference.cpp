#include "cdvi/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "cdvi/rng.hpp"
#include "cdvi/simulator.hpp"

namespace cdvi {

double diag_gaussian_log_pdf(const DiagonalGaussian& g, std::span<const double> z) {
  if (z.size() != g.dim()) {
    throw std::invalid_argument("diag_gaussian_log_pdf: dimension mismatch");
  }
  double acc = -0.5 * static_cast<double>(g.dim()) * kLogTwoPi;
  for (std::size_t j = 0; j < g.dim(); ++j) {
    const double t = (z[j] - g.mean[j]) * std::exp(-g.log_scale[j]);
    acc += -0.5 * t * t - g.log_scale[j];
  }
  return acc;
}

DiagonalGaussian CdCvaeRowModel::proposal(std::span<const double> x, double y,
                                          int delta) const {
  if (override_) return override_(x, y, delta);
  return encode(*model_, x, y, delta);
}

double CdCvaeRowModel::log_joint(std::span<const double> x, double y, int delta,
                                 std::span<const double> z) const {
  const double ll = delta == 1 ? log_f(*model_, y, x, z) : log_s(*model_, y, x, z);
  double log_p = -0.5 * static_cast<double>(model_->d_z) * kLogTwoPi;
  for (double v : z) log_p += -0.5 * v * v;
  return ll + log_p;
}

double SimOracleRowModel::log_marginal(double x, double y, int delta) {
  const double scale = std::sqrt(2.0 + x * x);
  return delta == 1 ? log_pdf(Family::kGaussian, y, 0.0, scale)
                    : log_survival(Family::kGaussian, y, 0.0, scale);
}

DiagonalGaussian SimOracleRowModel::proposal(std::span<const double> x, double y,
                                             int delta) const {
  return true_posterior(x[0], y, delta);
}

double SimOracleRowModel::log_joint(std::span<const double> x, double y,
                                    int delta, std::span<const double> z) const {
  return log_marginal(x[0], y, delta) +
         diag_gaussian_log_pdf(true_posterior(x[0], y, delta), z);
}

DiagonalGaussian ConjugateToyModel::proposal(std::span<const double>, double,
                                             int) const {
  return DiagonalGaussian{{0.5}, {std::log(1.5)}};
}

double ConjugateToyModel::log_joint(std::span<const double>, double y, int,
                                    std::span<const double> z) const {
  return log_pdf(Family::kGaussian, y, z[0], 1.0) +
         log_pdf(Family::kGaussian, z[0], 0.0, 1.0);
}

double ConjugateToyModel::true_log_marginal(double y) {
  return log_pdf(Family::kGaussian, y, 0.0, std::sqrt(2.0));
}

DiagonalGaussian ConjugateToyModel::exact_posterior(double y) {
  return DiagonalGaussian{{y / 2.0}, {std::log(std::sqrt(0.5))}};
}

namespace {

// Draws z ~ proposal and returns the log weights log_joint - log q(z).
void sample_log_weights(const RowDensityModel& model, std::span<const double> x,
                        double y, int delta, const DiagonalGaussian& q, int count,
                        Rng& rng, std::vector<double>& out) {
  const std::size_t d = q.dim();
  std::vector<double> z(d);
  out.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      z[j] = q.mean[j] + std::exp(q.log_scale[j]) * rng.normal();
    }
    out[static_cast<std::size_t>(i)] =
        model.log_joint(x, y, delta, z) - diag_gaussian_log_pdf(q, z);
  }
}

}  // namespace

LoglikEstimate estimate_loglik(const RowDensityModel& model,
                               std::span<const double> x, double y, int delta,
                               int M, std::uint64_t seed) {
  if (M < 1) throw std::invalid_argument("estimate_loglik: M must be >= 1");
  Rng rng(seed);
  const DiagonalGaussian q = model.proposal(x, y, delta);
  std::vector<double> lw;
  sample_log_weights(model, x, y, delta, q, M, rng, lw);

  LoglikEstimate est;
  est.value = log_sum_exp(lw) - std::log(static_cast<double>(M));

  // Delta-method s.e. and effective sample size on max-shifted weights.
  const double hi = *std::max_element(lw.begin(), lw.end());
  double s1 = 0.0;
  double s2 = 0.0;
  for (double v : lw) {
    const double w = std::exp(v - hi);
    s1 += w;
    s2 += w * w;
  }
  const double mean = s1 / static_cast<double>(M);
  double var = 0.0;
  for (double v : lw) {
    const double d = std::exp(v - hi) - mean;
    var += d * d;
  }
  var /= std::max(1.0, static_cast<double>(M - 1));
  est.se = std::sqrt(var / static_cast<double>(M)) / mean;
  est.ess = s1 * s1 / std::max(s2, 1e-300);
  est.low_ess = est.ess < 10.0;
  return est;
}

McEstimate elbo_row_mc(const RowDensityModel& model, std::span<const double> x,
                       double y, int delta, int draws, long replications,
                       std::uint64_t seed) {
  if (draws < 1 || replications < 1) {
    throw std::invalid_argument("elbo_row_mc: bad draws/replications");
  }
  Rng rng(seed);
  const DiagonalGaussian q = model.proposal(x, y, delta);
  std::vector<double> lw;
  double s1 = 0.0;
  double s2 = 0.0;
  for (long r = 0; r < replications; ++r) {
    sample_log_weights(model, x, y, delta, q, draws, rng, lw);
    const double v = log_sum_exp(lw) - std::log(static_cast<double>(draws));
    s1 += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(replications);
  McEstimate e;
  e.value = s1 / n;
  const double var = std::max(0.0, (s2 - s1 * s1 / n) / std::max(1.0, n - 1.0));
  e.se = std::sqrt(var / n);
  return e;
}

namespace {
std::vector<std::size_t> all_rows(const SurvivalDataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

EncoderKl kl_against_truth(
    const SurvivalDataset& data, std::span<const std::size_t> rows,
    const std::function<DiagonalGaussian(std::span<const double>, double, int)>& prop) {
  if (!data.has_truth()) {
    throw std::invalid_argument("encoder_kl: dataset lacks latent ground truth");
  }
  EncoderKl out;
  double e_acc = 0.0;
  double c_acc = 0.0;
  const auto& tr = data.transform;
  for (std::size_t i : rows) {
    const auto q = prop(data.row(i), data.y[i], data.event[i]);
    // The proposal sees the dataset's (possibly standardized) coordinates;
    // the reference posterior is defined on the original scale.
    double x0 = data.row(i)[0];
    if (tr.standardized) x0 = x0 * tr.feature_std[0] + tr.feature_mean[0];
    const double y0 = tr.to_original_time(data.y[i]);
    const auto p = true_posterior(x0, y0, data.event[i]);
    const double kl = kl_diag_gaussian(q, p);
    if (data.event[i] == 1) {
      e_acc += kl;
      ++out.n_event;
    } else {
      c_acc += kl;
      ++out.n_censored;
    }
  }
  if (out.n_event > 0) out.e_kl = e_acc / static_cast<double>(out.n_event);
  if (out.n_censored > 0) out.c_kl = c_acc / static_cast<double>(out.n_censored);
  return out;
}
}  // namespace

EncoderKl encoder_kl(const CdCvaeModel& model, const SurvivalDataset& data,
                     std::span<const std::size_t> rows) {
  const auto all = rows.empty() ? all_rows(data) : std::vector<std::size_t>();
  const auto view = rows.empty() ? std::span<const std::size_t>(all) : rows;
  return kl_against_truth(data, view,
                          [&](std::span<const double> x, double y, int d) {
                            return encode(model, x, y, d);
                          });
}

EncoderKl proposal_kl(const RowDensityModel& model, const SurvivalDataset& data,
                      std::span<const std::size_t> rows) {
  const auto all = rows.empty() ? all_rows(data) : std::vector<std::size_t>();
  const auto view = rows.empty() ? std::span<const std::size_t>(all) : rows;
  return kl_against_truth(data, view,
                          [&](std::span<const double> x, double y, int d) {
                            return model.proposal(x, y, d);
                          });
}

std::string GapReport::to_json() const {
  nlohmann::json j;
  if (e_kl) j["e_kl"] = *e_kl;
  if (c_kl) j["c_kl"] = *c_kl;
  j["loglik_estimate"] = loglik_estimate;
  j["loglik_se"] = loglik_se;
  j["elbo_value"] = elbo_value;
  j["elbo_se"] = elbo_se;
  j["gap_estimate"] = gap_estimate;
  j["gap_se"] = gap_se;
  j["oracle_samples"] = oracle_samples;
  j["n_rows"] = n_rows;
  return j.dump(2);
}

void parallel_blocks(int blocks, int threads,
                     const std::function<void(int)>& run_block) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  threads = std::min(threads, blocks);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::exception_ptr error;
  std::mutex error_mu;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (int b = next.fetch_add(1); b < blocks; b = next.fetch_add(1)) {
        try {
          run_block(b);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

GapReport gap_report(const RowDensityModel& model, const SurvivalDataset& data,
                     std::span<const std::size_t> rows, const EstimatorConfig& cfg,
                     int M, std::uint64_t seed, long elbo_replications,
                     int threads) {
  const auto all = rows.empty() ? all_rows(data) : std::vector<std::size_t>();
  const auto view = rows.empty() ? std::span<const std::size_t>(all) : rows;
  const std::size_t n = view.size();
  if (n == 0) throw std::invalid_argument("gap_report: no rows");

  std::vector<double> ll(n), ll_se(n), eb(n), eb_se(n);
  const int blocks = 64;
  parallel_blocks(blocks, threads, [&](int b) {
    for (std::size_t r = static_cast<std::size_t>(b); r < n;
         r += static_cast<std::size_t>(blocks)) {
      const std::size_t i = view[r];
      const auto x = data.row(i);
      const double y = data.y[i];
      const int delta = data.event[i];
      const auto est = estimate_loglik(model, x, y, delta, M,
                                       seed + 0x1000 + 2 * r);
      ll[r] = est.value;
      ll_se[r] = est.se;
      const int draws = delta == 1 ? cfg.m : cfg.k;
      const auto e = elbo_row_mc(model, x, y, delta, draws, elbo_replications,
                                 seed + 0x2000 + 2 * r + 1);
      eb[r] = e.value;
      eb_se[r] = e.se;
    }
  });

  GapReport rep;
  rep.oracle_samples = M;
  rep.n_rows = n;
  double ll_acc = 0.0, eb_acc = 0.0, ll_var = 0.0, eb_var = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ll_acc += ll[r];
    eb_acc += eb[r];
    ll_var += ll_se[r] * ll_se[r];
    eb_var += eb_se[r] * eb_se[r];
  }
  const double dn = static_cast<double>(n);
  rep.loglik_estimate = ll_acc / dn;
  rep.elbo_value = eb_acc / dn;
  rep.loglik_se = std::sqrt(ll_var) / dn;
  rep.elbo_se = std::sqrt(eb_var) / dn;
  rep.gap_estimate = rep.loglik_estimate - rep.elbo_value;
  rep.gap_se = std::sqrt(ll_var + eb_var) / dn;
  if (data.has_truth()) {
    const auto kl = proposal_kl(model, data, view);
    rep.e_kl = kl.e_kl;
    rep.c_kl = kl.c_kl;
  }
  return rep;
}

namespace {
// Ordinary least squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}
}  // namespace

std::string ScalingStudy::to_json() const {
  nlohmann::json j;
  j["true_value"] = true_value;
  j["is_bias_slope"] = is_bias_slope;
  j["is_var_slope"] = is_var_slope;
  j["dvi_bias_slope"] = dvi_bias_slope;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"m", p.m},
                   {"replications", p.replications},
                   {"is_bias", p.is_bias},
                   {"is_bias_se", p.is_bias_se},
                   {"is_var", p.is_var},
                   {"dvi_bias", p.dvi_bias},
                   {"dvi_bias_se", p.dvi_bias_se},
                   {"dvi_var", p.dvi_var}});
  }
  j["points"] = std::move(pts);
  return j.dump(2);
}

std::string ScalingStudy::to_csv() const {
  std::ostringstream out;
  out.precision(12);
  out << "m,replications,is_bias,is_bias_se,is_var,dvi_bias,dvi_bias_se,dvi_var\n";
  for (const auto& p : points) {
    out << p.m << "," << p.replications << "," << p.is_bias << ","
        << p.is_bias_se << "," << p.is_var << "," << p.dvi_bias << ","
        << p.dvi_bias_se << "," << p.dvi_var << "\n";
  }
  return out.str();
}

ScalingStudy bias_variance_study(std::span<const int> m_grid,
                                 long min_replications, std::uint64_t seed,
                                 int threads) {
  const ConjugateToyModel toy;
  const double y = 0.0;
  const double truth = ConjugateToyModel::true_log_marginal(y);
  const DiagonalGaussian q = toy.proposal({}, y, 1);

  ScalingStudy study;
  study.true_value = truth;

  const int blocks = 64;
  for (std::size_t gi = 0; gi < m_grid.size(); ++gi) {
    const int m = m_grid[gi];
    if (m < 2) throw std::invalid_argument("bias_variance_study: m must be >= 2");
    // Keep the top-of-grid bias (~1/m) resolvable above the noise floor
    // (~1/sqrt(R m)) by scaling replications with m.
    const long reps = std::max<long>(min_replications, 830L * m);
    const long per_block = (reps + blocks - 1) / blocks;
    const long actual = per_block * blocks;

    std::vector<double> is_s1(blocks, 0.0), is_s2(blocks, 0.0);
    std::vector<double> dv_s1(blocks, 0.0), dv_s2(blocks, 0.0);
    parallel_blocks(blocks, threads, [&](int b) {
      Rng rng(seed + 0x5151 * (gi + 1) + static_cast<std::uint64_t>(b));
      std::vector<double> lw(static_cast<std::size_t>(m));
      std::vector<double> z(1);
      for (long r = 0; r < per_block; ++r) {
        for (int i = 0; i < m; ++i) {
          z[0] = q.mean[0] + std::exp(q.log_scale[0]) * rng.normal();
          lw[static_cast<std::size_t>(i)] =
              toy.log_joint({}, y, 1, z) - diag_gaussian_log_pdf(q, z);
        }
        const double lse = log_sum_exp(lw);
        const double log_fhat = lse - std::log(static_cast<double>(m));
        double sum_w2 = 0.0;
        for (double v : lw) {
          const double w = std::exp(v - lse);
          sum_w2 += w * w;
        }
        const double bias_term = (static_cast<double>(m) * sum_w2 - 1.0) /
                                 (2.0 * (static_cast<double>(m) - 1.0));
        const double log_fdot = log_fhat + bias_term;
        is_s1[b] += log_fhat;
        is_s2[b] += log_fhat * log_fhat;
        dv_s1[b] += log_fdot;
        dv_s2[b] += log_fdot * log_fdot;
      }
    });
    double s1 = 0.0, s2 = 0.0, t1 = 0.0, t2 = 0.0;
    for (int b = 0; b < blocks; ++b) {
      s1 += is_s1[b];
      s2 += is_s2[b];
      t1 += dv_s1[b];
      t2 += dv_s2[b];
    }
    const double n = static_cast<double>(actual);
    ScalingPoint p;
    p.m = m;
    p.replications = actual;
    p.is_bias = s1 / n - truth;
    p.is_var = std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0));
    p.is_bias_se = std::sqrt(p.is_var / n);
    p.dvi_bias = t1 / n - truth;
    p.dvi_var = std::max(0.0, (t2 - t1 * t1 / n) / (n - 1.0));
    p.dvi_bias_se = std::sqrt(p.dvi_var / n);
    study.points.push_back(p);
  }

  std::vector<double> lx, l_is_bias, l_is_var, l_dvi_bias;
  for (const auto& p : study.points) {
    lx.push_back(std::log(static_cast<double>(p.m)));
    l_is_bias.push_back(std::log(std::abs(p.is_bias)));
    l_is_var.push_back(std::log(p.is_var));
    l_dvi_bias.push_back(std::log(std::max(std::abs(p.dvi_bias), 1e-300)));
  }
  study.is_bias_slope = ols_slope(lx, l_is_bias);
  study.is_var_slope = ols_slope(lx, l_is_var);
  study.dvi_bias_slope = ols_slope(lx, l_dvi_bias);
  return study;
}

std::string MonotonicityStudy::to_csv() const {
  std::ostringstream out;
  out.precision(12);
  out << "m,k,estimate,se\n";
  for (std::size_t mi = 0; mi < m_grid.size(); ++mi) {
    for (std::size_t ki = 0; ki < k_grid.size(); ++ki) {
      out << m_grid[mi] << "," << k_grid[ki] << "," << estimate[mi][ki] << ","
          << se[mi][ki] << "\n";
    }
  }
  return out.str();
}

MonotonicityStudy monotonicity_study(const RowDensityModel& model,
                                     const SurvivalDataset& data,
                                     std::span<const std::size_t> rows,
                                     std::span<const int> m_grid,
                                     std::span<const int> k_grid,
                                     long replications, std::uint64_t seed,
                                     int threads) {
  MonotonicityStudy study;
  study.m_grid.assign(m_grid.begin(), m_grid.end());
  study.k_grid.assign(k_grid.begin(), k_grid.end());

  std::vector<std::size_t> ev_rows, ce_rows;
  for (std::size_t i : rows) {
    (data.event[i] == 1 ? ev_rows : ce_rows).push_back(i);
  }
  const std::size_t n = rows.size();
  const double w_ev = static_cast<double>(ev_rows.size()) / static_cast<double>(n);
  const double w_ce = static_cast<double>(ce_rows.size()) / static_cast<double>(n);
  const int max_m = m_grid.empty() ? 0 : *std::max_element(m_grid.begin(), m_grid.end());
  const int max_k = k_grid.empty() ? 0 : *std::max_element(k_grid.begin(), k_grid.end());

  // Per-replication averages over rows for each grid prefix.
  const std::size_t gm = m_grid.size();
  const std::size_t gk = k_grid.size();
  std::vector<double> f_part(static_cast<std::size_t>(replications) * gm, 0.0);
  std::vector<double> s_part(static_cast<std::size_t>(replications) * gk, 0.0);

  // Cache proposals per row.
  std::vector<DiagonalGaussian> props;
  props.reserve(n);
  for (std::size_t i : rows) {
    props.push_back(model.proposal(data.row(i), data.y[i], data.event[i]));
  }

  const int blocks = 64;
  parallel_blocks(blocks, threads, [&](int b) {
    Rng rng(seed + 0x77ull * static_cast<std::uint64_t>(b + 1));
    std::vector<double> lw(static_cast<std::size_t>(std::max(max_m, max_k)));
    std::vector<double> z(static_cast<std::size_t>(model.latent_dim()));
    for (long r = b; r < replications; r += blocks) {
      for (std::size_t ri = 0; ri < n; ++ri) {
        const std::size_t i = rows[ri];
        const int delta = data.event[i];
        const int draws = delta == 1 ? max_m : max_k;
        if (draws == 0) continue;
        const auto& q = props[ri];
        const auto x = data.row(i);
        for (int d = 0; d < draws; ++d) {
          for (std::size_t c = 0; c < z.size(); ++c) {
            z[c] = q.mean[c] + std::exp(q.log_scale[c]) * rng.normal();
          }
          lw[static_cast<std::size_t>(d)] =
              model.log_joint(x, data.y[i], delta, z) -
              diag_gaussian_log_pdf(q, z);
        }
        // Prefix estimates at every grid value.
        const auto grid = delta == 1 ? m_grid : k_grid;
        auto* part = delta == 1 ? &f_part : &s_part;
        const std::size_t g = delta == 1 ? gm : gk;
        const double row_w = 1.0 / static_cast<double>(
                                       delta == 1 ? ev_rows.size() : ce_rows.size());
        for (std::size_t gi = 0; gi < g; ++gi) {
          const int mj = grid[gi];
          const double est =
              log_sum_exp(std::span<const double>(lw.data(),
                                                  static_cast<std::size_t>(mj))) -
              std::log(static_cast<double>(mj));
          (*part)[static_cast<std::size_t>(r) * g + gi] += est * row_w;
        }
      }
    }
  });

  study.estimate.assign(gm, std::vector<double>(gk, 0.0));
  study.se.assign(gm, std::vector<double>(gk, 0.0));
  for (std::size_t mi = 0; mi < gm; ++mi) {
    for (std::size_t ki = 0; ki < gk; ++ki) {
      double s1 = 0.0, s2 = 0.0;
      for (long r = 0; r < replications; ++r) {
        const double v =
            w_ev * (gm ? f_part[static_cast<std::size_t>(r) * gm + mi] : 0.0) +
            w_ce * (gk ? s_part[static_cast<std::size_t>(r) * gk + ki] : 0.0);
        s1 += v;
        s2 += v * v;
      }
      const double nr = static_cast<double>(replications);
      study.estimate[mi][ki] = s1 / nr;
      const double var = std::max(0.0, (s2 - s1 * s1 / nr) / (nr - 1.0));
      study.se[mi][ki] = std::sqrt(var / nr);
    }
  }

  auto axis_diffs = [&](const std::vector<double>& part, std::size_t g,
                        std::span<const int> grid, double w,
                        std::vector<MonotonicityStudy::Diff>& out) {
    for (std::size_t gi = 0; gi + 1 < g; ++gi) {
      double s1 = 0.0, s2 = 0.0;
      for (long r = 0; r < replications; ++r) {
        const double v = w * (part[static_cast<std::size_t>(r) * g + gi + 1] -
                              part[static_cast<std::size_t>(r) * g + gi]);
        s1 += v;
        s2 += v * v;
      }
      const double nr = static_cast<double>(replications);
      MonotonicityStudy::Diff d;
      d.from = grid[gi];
      d.to = grid[gi + 1];
      d.diff = s1 / nr;
      const double var = std::max(0.0, (s2 - s1 * s1 / nr) / (nr - 1.0));
      d.se = std::sqrt(var / nr);
      out.push_back(d);
    }
  };
  if (!ev_rows.empty()) axis_diffs(f_part, gm, m_grid, w_ev, study.m_diffs);
  if (!ce_rows.empty()) axis_diffs(s_part, gk, k_grid, w_ce, study.k_diffs);
  for (const auto& d : study.m_diffs) {
    if (d.diff < -2.0 * d.se) study.nondecreasing_m = false;
  }
  for (const auto& d : study.k_diffs) {
    if (d.diff < -2.0 * d.se) study.nondecreasing_k = false;
  }
  return study;
}

std::string posterior_slice_csv(const CdCvaeModel& model,
                                const SurvivalDataset& data, double x0,
                                double y0, std::span<const double> z_axis,
                                int knn) {
  if (!data.has_truth()) {
    throw std::invalid_argument("posterior_slice_csv: needs simulated data");
  }
  // (x0, y0) arrive on the original scale; the encoder and the local
  // delta-frequency run on the dataset's coordinates.
  const auto& tr = data.transform;
  double x0s = x0;
  double y0s = y0;
  if (tr.standardized) {
    x0s = (x0 - tr.feature_mean[0]) / tr.feature_std[0];
    y0s = tr.to_model_time(y0);
  }
  // Local event frequency around (x0, y0), distances standardized per axis.
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(data.size());
  double sx = 0.0, sy = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    mx += data.row(i)[0];
    my += data.y[i];
  }
  mx /= static_cast<double>(data.size());
  my /= static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    sx += (data.row(i)[0] - mx) * (data.row(i)[0] - mx);
    sy += (data.y[i] - my) * (data.y[i] - my);
  }
  sx = std::sqrt(sx / static_cast<double>(data.size()));
  sy = std::sqrt(sy / static_cast<double>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double dx = (data.row(i)[0] - x0s) / sx;
    const double dy = (data.y[i] - y0s) / sy;
    dist.emplace_back(dx * dx + dy * dy, i);
  }
  const std::size_t kn = std::min<std::size_t>(static_cast<std::size_t>(knn),
                                               dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kn),
                    dist.end());
  double p_event = 0.0;
  for (std::size_t i = 0; i < kn; ++i) {
    p_event += data.event[dist[i].second] == 1 ? 1.0 : 0.0;
  }
  p_event /= static_cast<double>(kn);

  const std::vector<double> x0v = {x0s};
  const DiagonalGaussian q1 = encode(model, x0v, y0s, 1);
  const DiagonalGaussian q0 = encode(model, x0v, y0s, 0);
  const DiagonalGaussian t1 = true_posterior(x0, y0, 1);
  const DiagonalGaussian t0 = true_posterior(x0, y0, 0);

  std::ostringstream out;
  out.precision(12);
  out << "z1,z2,q_event,q_censor,q_marginal,true_event,true_censor,true_marginal\n";
  std::vector<double> z(2);
  for (double z1 : z_axis) {
    for (double z2 : z_axis) {
      z[0] = z1;
      z[1] = z2;
      const double d_q1 = std::exp(diag_gaussian_log_pdf(q1, z));
      const double d_q0 = std::exp(diag_gaussian_log_pdf(q0, z));
      const double d_t1 = std::exp(diag_gaussian_log_pdf(t1, z));
      const double d_t0 = std::exp(diag_gaussian_log_pdf(t0, z));
      out << z1 << "," << z2 << "," << d_q1 << "," << d_q0 << ","
          << p_event * d_q1 + (1.0 - p_event) * d_q0 << "," << d_t1 << ","
          << d_t0 << "," << p_event * d_t1 + (1.0 - p_event) * d_t0 << "\n";
    }
  }
  return out.str();
}

}  // namespace cdvi
