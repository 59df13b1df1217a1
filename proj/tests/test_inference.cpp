#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "cdvi/inference.hpp"
#include "cdvi/simulator.hpp"

using namespace cdvi;

namespace {
// 2-d trapezoid quadrature of f over [lo, hi]^2.
template <typename F>
double quad2(F f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double w = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
      acc += w * f(lo + i * h, lo + j * h);
    }
  }
  return acc * h * h;
}

std::vector<std::size_t> first_n(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}
}  // namespace

TEST_CASE("conjugate toy: marginal, exact posterior, convergence") {
  const ConjugateToyModel toy;
  // Closed form: log N(0; 0, sqrt(2)).
  CHECK(ConjugateToyModel::true_log_marginal(0.0) ==
        doctest::Approx(-1.2655121234846454).epsilon(1e-12));

  // q = prior-based proposal: consistent estimate within 3 s.e. and
  // s.e. shrinking like 1/sqrt(M).
  double prev_se = 1e9;
  for (int M : {1000, 10000, 100000}) {
    const auto est = estimate_loglik(toy, {}, 0.0, 1, M, 42);
    CHECK(std::abs(est.value - ConjugateToyModel::true_log_marginal(0.0)) <
          3.0 * est.se);
    CHECK(est.se < prev_se);
    prev_se = est.se;
    CHECK(!est.low_ess);
  }
}

TEST_CASE("conjugate toy: exact posterior gives zero-variance weights") {
  // Swap the proposal for the exact posterior via a wrapper.
  class ExactProposalToy : public ConjugateToyModel {
   public:
    DiagonalGaussian proposal(std::span<const double>, double y, int) const override {
      return ConjugateToyModel::exact_posterior(y);
    }
  };
  const ExactProposalToy toy;
  for (int M : {1, 7, 100}) {
    const auto est = estimate_loglik(toy, {}, 0.0, 1, M, 3);
    CHECK(est.value ==
          doctest::Approx(ConjugateToyModel::true_log_marginal(0.0)).epsilon(1e-12));
    CHECK(est.se == doctest::Approx(0.0));
  }
}

TEST_CASE("sim oracle marginal matches 2-d quadrature of emission x prior") {
  // The reference marginal N(0, sqrt(2 + x^2)) equals the integral of
  // N(y; z1 + x z2, 1) N(z; 0, I) over z.
  for (double x : {0.0, 1.0, -0.7}) {
    for (double y : {0.0, 1.5, -2.0}) {
      const double direct = quad2(
          [&](double z1, double z2) {
            return std::exp(log_pdf(Family::kGaussian, y, z1 + x * z2, 1.0)) *
                   std::exp(log_pdf(Family::kGaussian, z1, 0.0, 1.0)) *
                   std::exp(log_pdf(Family::kGaussian, z2, 0.0, 1.0));
          },
          -8.0, 8.0, 400);
      CHECK(std::log(direct) ==
            doctest::Approx(SimOracleRowModel::log_marginal(x, y, 1)).epsilon(1e-5));
    }
  }
}

TEST_CASE("sim oracle has exactly constant weights") {
  const SimOracleRowModel oracle;
  const std::vector<double> x{1.0};
  for (int delta : {1, 0}) {
    const auto est = estimate_loglik(oracle, x, 0.3, delta, 64, 9);
    CHECK(est.se == doctest::Approx(0.0));
    CHECK(est.value ==
          doctest::Approx(SimOracleRowModel::log_marginal(1.0, 0.3, delta))
              .epsilon(1e-12));
  }
}

TEST_CASE("zero-gap oracle on SD4 rows") {
  auto cfg = sim_preset("sd4", 200, 17);
  cfg.burn_in = 1000;
  const auto ds = gibbs_simulate(cfg);
  const SimOracleRowModel oracle;
  EstimatorConfig est;
  est.objective = Objective::kElboC;
  const auto rows = first_n(ds.size());
  const auto rep = gap_report(oracle, ds, rows, est, 1000, 5, 50);
  CHECK(std::abs(rep.gap_estimate) <= std::max(3.0 * rep.gap_se, 1e-12));
  CHECK(rep.gap_se < 0.01);
  // Proposal == true posterior: both KL columns are exactly zero.
  REQUIRE(rep.e_kl.has_value());
  REQUIRE(rep.c_kl.has_value());
  CHECK(*rep.e_kl == 0.0);
  CHECK(*rep.c_kl == 0.0);
}

TEST_CASE("gap is nonnegative for an arbitrary model state") {
  auto cfg = sim_preset("sd4", 60, 3);
  cfg.burn_in = 500;
  auto ds = gibbs_simulate(cfg);
  const auto sp = split(ds, 2);
  ds = standardize(ds, sp.train, false);
  auto model = CdCvaeModel::make(1, 2, {8}, Family::kGaussian, 21);
  const CdCvaeRowModel rm(model);
  EstimatorConfig est;
  est.objective = Objective::kElboC;
  const auto rows = first_n(20);
  const auto rep = gap_report(rm, ds, rows, est, 4000, 7, 400);
  CHECK(rep.gap_estimate > -3.0 * rep.gap_se);
  CHECK(rep.n_rows == 20);
}

TEST_CASE("encoder_kl: perfect proposal gives exact zeros, table absence") {
  auto cfg = sim_preset("sd4", 100, 4);
  cfg.burn_in = 200;
  const auto ds = gibbs_simulate(cfg);
  // RowDensityModel whose proposal is the truth.
  const SimOracleRowModel oracle;
  const auto kl = proposal_kl(oracle, ds);
  REQUIRE(kl.e_kl.has_value());
  REQUIRE(kl.c_kl.has_value());
  CHECK(*kl.e_kl == 0.0);
  CHECK(*kl.c_kl == 0.0);

  // All-event data: the censored column is absent.
  auto cfg1 = sim_preset("sd1", 50, 4);
  cfg1.burn_in = 100;
  const auto sd1 = gibbs_simulate(cfg1);
  auto model = CdCvaeModel::make(1, 2, {6}, Family::kGaussian, 5);
  const auto ekl = encoder_kl(model, sd1);
  CHECK(ekl.e_kl.has_value());
  CHECK(!ekl.c_kl.has_value());
}

TEST_CASE("gap report averages re-derivable by brute force") {
  auto cfg = sim_preset("sd4", 30, 6);
  cfg.burn_in = 100;
  const auto ds = gibbs_simulate(cfg);
  const SimOracleRowModel oracle;
  EstimatorConfig est;
  est.objective = Objective::kElboC;
  const auto rows = first_n(ds.size());
  const auto rep = gap_report(oracle, ds, rows, est, 128, 11, 16);
  double acc = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    acc += estimate_loglik(oracle, ds.row(rows[r]), ds.y[rows[r]],
                           ds.event[rows[r]], 128, 11 + 0x1000 + 2 * r)
               .value;
  }
  CHECK(rep.loglik_estimate ==
        doctest::Approx(acc / static_cast<double>(rows.size())).epsilon(1e-12));
  CHECK(rep.gap_estimate ==
        doctest::Approx(rep.loglik_estimate - rep.elbo_value).epsilon(1e-12));
}

TEST_CASE("bias and variance scale like 1/m in the conjugate toy") {
  // Smoke-scale grid; the second-order 1/m^2 terms still curve the short
  // log-log line, so the tolerance is looser than at acceptance scale.
  const std::vector<int> grid{4, 8, 16, 32, 64};
  const auto study = bias_variance_study(grid, 40000, 13);
  CHECK(std::abs(study.is_bias_slope - (-1.0)) < 0.25);
  CHECK(std::abs(study.is_var_slope - (-1.0)) < 0.25);
  // IS bias is negative (Jensen) and shrinking.
  for (const auto& p : study.points) {
    CHECK(p.is_bias < 0.0);
  }
  CHECK(std::abs(study.points.back().is_bias) <
        std::abs(study.points.front().is_bias));
  // Delta-method variant has smaller |bias| once m is moderately large.
  for (const auto& p : study.points) {
    if (p.m >= 32) CHECK(std::abs(p.dvi_bias) < std::abs(p.is_bias));
  }
}

TEST_CASE("monotonicity study on a frozen model batch") {
  auto cfg = sim_preset("sd4", 400, 19);
  cfg.burn_in = 500;
  auto raw = gibbs_simulate(cfg);
  const auto sp = split(raw, 3);
  auto ds = standardize(raw, sp.train, false);
  auto model = CdCvaeModel::make(1, 2, {8}, Family::kGaussian, 23);
  // Nudge the model off its init so weights are not degenerate.
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 100;
  tc.max_epochs = 3;
  tc.patience = 3;
  tc.seed = 11;
  EstimatorConfig est;
  est.objective = Objective::kElboC;
  train(model, ds, sp, est, tc);

  const CdCvaeRowModel rm(model);
  // Mixed batch: first 8 events, first 8 censored.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size() && rows.size() < 8; ++i) {
    if (ds.event[i] == 1) rows.push_back(i);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.event[i] == 0) {
      rows.push_back(i);
      if (rows.size() >= 16) break;
    }
  }
  const std::vector<int> grid{1, 2, 4, 8};
  const auto study = monotonicity_study(rm, ds, rows, grid, grid, 20000, 31);
  CHECK(study.nondecreasing_m);
  CHECK(study.nondecreasing_k);
  // Larger m strictly improves the event part here.
  CHECK(study.estimate.back().back() > study.estimate.front().front());
  // Single-cell grid equals the plain elbo_c Monte Carlo estimate.
  const std::vector<int> one{1};
  const auto single = monotonicity_study(rm, ds, rows, one, one, 5000, 31);
  CHECK(single.estimate.size() == 1);
  CHECK(std::isfinite(single.estimate[0][0]));
}

TEST_CASE("posterior slice export integrates to one and shows delta dependence") {
  auto cfg = sim_preset("sd4", 300, 29);
  cfg.burn_in = 300;
  const auto ds = gibbs_simulate(cfg);
  auto model = CdCvaeModel::make(1, 2, {8}, Family::kGaussian, 31);
  std::vector<double> axis;
  for (double v = -6.0; v <= 6.0; v += 0.1) axis.push_back(v);
  const auto csv = posterior_slice_csv(model, ds, 1.0, 0.0, axis);

  // Parse back and integrate the true-posterior columns on the grid.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  double cell = 0.1 * 0.1;
  double mass_t1 = 0.0, mass_t0 = 0.0;
  double peak = -1.0, peak_z1 = 0.0, peak_z2 = 0.0;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<double> vals;
    std::string cellv;
    while (std::getline(row, cellv, ',')) vals.push_back(std::stod(cellv));
    mass_t1 += vals[5] * cell;
    mass_t0 += vals[6] * cell;
    if (vals[5] > peak) {
      peak = vals[5];
      peak_z1 = vals[0];
      peak_z2 = vals[1];
    }
  }
  CHECK(mass_t1 == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(mass_t0 == doctest::Approx(1.0).epsilon(1e-2));
  // True event posterior peaks near (1.1036, 1.1036) on the grid.
  CHECK(peak_z1 == doctest::Approx(1.1).epsilon(0.05));
  CHECK(peak_z2 == doctest::Approx(1.1).epsilon(0.05));
}

TEST_CASE("parallel results are thread-count independent") {
  auto cfg = sim_preset("sd4", 40, 37);
  cfg.burn_in = 100;
  const auto ds = gibbs_simulate(cfg);
  const SimOracleRowModel oracle;
  EstimatorConfig est;
  est.objective = Objective::kElboC;
  const auto rows = first_n(ds.size());
  const auto rep1 = gap_report(oracle, ds, rows, est, 256, 3, 32, /*threads=*/1);
  const auto rep4 = gap_report(oracle, ds, rows, est, 256, 3, 32, /*threads=*/4);
  CHECK(rep1.loglik_estimate == rep4.loglik_estimate);
  CHECK(rep1.elbo_value == rep4.elbo_value);
}
