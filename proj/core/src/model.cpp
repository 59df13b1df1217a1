#include "cdvi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "cdvi/metrics.hpp"

namespace cdvi {

Objective objective_from_name(std::string_view name) {
  if (name == "vanilla") return Objective::kVanilla;
  if (name == "elbo-c" || name == "elbo_c") return Objective::kElboC;
  if (name == "is") return Objective::kIs;
  if (name == "dvi") return Objective::kDvi;
  throw std::invalid_argument("unknown objective '" + std::string(name) +
                              "' (valid: vanilla, elbo-c, is, dvi)");
}

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::kVanilla: return "vanilla";
    case Objective::kElboC: return "elbo_c";
    case Objective::kIs: return "elbo_c_is";
    case Objective::kDvi: return "elbo_c_dvi";
  }
  return "?";
}

void EstimatorConfig::validate() const {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  switch (objective) {
    case Objective::kVanilla:
    case Objective::kElboC:
      if (m != 1 || k != 1) {
        throw std::invalid_argument(
            "vanilla/elbo-c use single-sample expectations (m = k = 1)");
      }
      break;
    case Objective::kIs:
      if (m < 1 || k < 1) throw std::invalid_argument("is: m, k must be >= 1");
      break;
    case Objective::kDvi:
      if (m < 2 || k < 2) {
        throw std::invalid_argument("delta variant needs >=2 samples");
      }
      break;
  }
}

double CdCvaeModel::sigma() const {
  return std::exp(params.at(log_sigma_id).value[0]);
}

CdCvaeModel CdCvaeModel::make(int d_x, int d_z, std::vector<int> hidden,
                              Family family, std::uint64_t seed,
                              ad::Activation activation, double dropout) {
  if (d_x <= 0 || d_z <= 0) throw std::invalid_argument("bad model dims");
  CdCvaeModel m;
  m.family = family;
  m.d_x = d_x;
  m.d_z = d_z;
  m.encoder_spec = ad::MlpSpec{d_x + 2, hidden, 2 * d_z, activation, dropout};
  m.decoder_spec = ad::MlpSpec{d_x + d_z, hidden, 1, activation, dropout};
  Rng rng(seed);
  m.enc = ad::init_mlp(m.params, m.encoder_spec, "enc", rng);
  m.dec = ad::init_mlp(m.params, m.decoder_spec, "dec", rng);
  m.log_sigma_id = m.params.add("log_sigma", {0.0});
  return m;
}

std::size_t eps_count(const CdCvaeModel& model, const BatchView& batch,
                      const EstimatorConfig& cfg) {
  std::size_t draws = 0;
  for (std::size_t i : batch.indices) {
    int j = 1;
    if (cfg.objective == Objective::kIs || cfg.objective == Objective::kDvi) {
      j = batch.data->event[i] == 1 ? cfg.m : cfg.k;
    }
    draws += static_cast<std::size_t>(j);
  }
  return draws * static_cast<std::size_t>(model.d_z);
}

ad::Tape::Id build_objective(ad::Tape& tape, CdCvaeModel& model,
                             const BatchView& batch, const EstimatorConfig& cfg,
                             std::span<const double> eps, bool train_mode,
                             Rng* dropout_rng) {
  cfg.validate();
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  if (eps.size() != eps_count(model, batch, cfg)) {
    throw std::invalid_argument("objective: eps size mismatch");
  }
  const int dz = model.d_z;
  const double dim_const = -0.5 * dz * kLogTwoPi;
  const bool multi = cfg.objective == Objective::kIs || cfg.objective == Objective::kDvi;

  const ad::Tape::Id log_sigma = tape.param(model.log_sigma_id);
  const ad::Tape::Id inv_sigma = tape.exp(tape.neg(log_sigma));

  std::vector<ad::Tape::Id> rows;
  rows.reserve(batch.size());
  std::vector<ad::Tape::Id> log_w;
  std::vector<double> enc_in(static_cast<std::size_t>(model.d_x) + 2);
  std::size_t cursor = 0;

  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const std::size_t i = batch.indices[bi];
    const auto xi = batch.data->row(i);
    const double y = batch.data->y[i];
    const int delta = batch.data->event[i];

    std::copy(xi.begin(), xi.end(), enc_in.begin());
    enc_in[static_cast<std::size_t>(model.d_x)] = y;
    enc_in[static_cast<std::size_t>(model.d_x) + 1] =
        cfg.objective == Objective::kVanilla ? 0.0 : static_cast<double>(delta);

    const ad::Tape::Id x_in = tape.input(xi);
    const ad::Tape::Id enc_out =
        ad::mlp_forward(tape, model.encoder_spec, model.enc, tape.input(enc_in),
                        train_mode, dropout_rng);
    for (double v : tape.value(enc_out)) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("encoder divergence at row " + std::to_string(i));
      }
    }
    const ad::Tape::Id mu_q = tape.slice(enc_out, 0, dz);
    const ad::Tape::Id log_sig_q = tape.slice(enc_out, dz, dz);
    const ad::Tape::Id sig_q = tape.exp(log_sig_q);
    const ad::Tape::Id inv_sig_q = tape.exp(tape.neg(log_sig_q));
    const ad::Tape::Id sum_log_sig_q = tape.sum(log_sig_q);

    const int j_draws = multi ? (delta == 1 ? cfg.m : cfg.k) : 1;
    log_w.clear();
    ad::Tape::Id last_ll = -1;
    ad::Tape::Id last_kl_hat = -1;
    for (int j = 0; j < j_draws; ++j) {
      const ad::Tape::Id eps_in =
          tape.input(eps.subspan(cursor, static_cast<std::size_t>(dz)));
      cursor += static_cast<std::size_t>(dz);
      const ad::Tape::Id z = tape.add(mu_q, tape.mul(sig_q, eps_in));

      const ad::Tape::Id mu =
          ad::mlp_forward(tape, model.decoder_spec, model.dec,
                          tape.concat(x_in, z), train_mode, dropout_rng);
      const ad::Tape::Id t = tape.mul(tape.const_minus(y, mu), inv_sigma);
      const ad::Tape::Id ll =
          delta == 1
              ? tape.add(tape.log_pdf_std(model.family, t), tape.neg(log_sigma))
              : tape.log_surv_std(model.family, t);

      const ad::Tape::Id log_p =
          tape.scale_add(tape.sum(tape.square(z)), -0.5, dim_const);
      const ad::Tape::Id tq = tape.mul(tape.sub(z, mu_q), inv_sig_q);
      const ad::Tape::Id log_q =
          tape.sub(tape.scale_add(tape.sum(tape.square(tq)), -0.5, dim_const),
                   sum_log_sig_q);
      last_ll = ll;
      last_kl_hat = tape.sub(log_q, log_p);
      log_w.push_back(tape.sub(ll, last_kl_hat));
    }

    ad::Tape::Id row;
    switch (cfg.objective) {
      case Objective::kVanilla:
        // delta*log f + (1-delta)*temperature*log S - KL-hat; the single
        // KL estimate sits outside the temperature weighting.
        row = tape.sub(delta == 1 ? last_ll
                                  : tape.scale_add(last_ll, cfg.temperature, 0.0),
                       last_kl_hat);
        break;
      case Objective::kElboC:
        row = delta == 1 ? log_w[0]
                         : tape.scale_add(log_w[0], cfg.temperature, 0.0);
        break;
      case Objective::kIs:
      case Objective::kDvi: {
        const ad::Tape::Id lw = tape.stack(log_w);
        ad::Tape::Id est = tape.scale_add(
            tape.logsumexp(lw), 1.0, -std::log(static_cast<double>(j_draws)));
        if (cfg.objective == Objective::kDvi) {
          // Normalized-weight bias term (m * sum w~^2 - 1) / (2 (m - 1)),
          // computed in log space.
          const ad::Tape::Id s = tape.logsumexp(lw);
          const ad::Tape::Id centered =
              tape.sub(lw, tape.broadcast(s, j_draws));
          const ad::Tape::Id sum_w2 =
              tape.exp(tape.logsumexp(tape.scale_add(centered, 2.0, 0.0)));
          const double denom = 2.0 * (static_cast<double>(j_draws) - 1.0);
          const ad::Tape::Id bias = tape.scale_add(
              sum_w2, static_cast<double>(j_draws) / denom, -1.0 / denom);
          est = tape.add(est, bias);
        }
        row = delta == 1 ? est : tape.scale_add(est, cfg.temperature, 0.0);
        break;
      }
    }
    if (!std::isfinite(tape.scalar(row))) {
      throw std::runtime_error("non-finite objective at row " + std::to_string(i));
    }
    rows.push_back(row);
  }
  return tape.mean(tape.stack(rows));
}

double objective_value(CdCvaeModel& model, const BatchView& batch,
                       const EstimatorConfig& cfg, std::span<const double> eps) {
  ad::Tape tape(model.params);
  return tape.scalar(build_objective(tape, model, batch, cfg, eps));
}

double objective_backward(CdCvaeModel& model, const BatchView& batch,
                          const EstimatorConfig& cfg, std::span<const double> eps,
                          bool train_mode, Rng* dropout_rng) {
  ad::Tape tape(model.params);
  const auto root =
      build_objective(tape, model, batch, cfg, eps, train_mode, dropout_rng);
  tape.backward(root);
  return tape.scalar(root);
}

DiagonalGaussian encode(const CdCvaeModel& model, std::span<const double> x,
                        double y, int delta) {
  std::vector<double> in(static_cast<std::size_t>(model.d_x) + 2);
  std::copy(x.begin(), x.end(), in.begin());
  in[static_cast<std::size_t>(model.d_x)] = y;
  in[static_cast<std::size_t>(model.d_x) + 1] = static_cast<double>(delta);
  std::vector<double> out(static_cast<std::size_t>(2 * model.d_z));
  ad::mlp_eval(model.params, model.encoder_spec, model.enc, in, out);
  DiagonalGaussian q;
  q.mean.assign(out.begin(), out.begin() + model.d_z);
  q.log_scale.assign(out.begin() + model.d_z, out.end());
  for (double v : out) {
    if (!std::isfinite(v)) throw std::runtime_error("encoder divergence");
  }
  return q;
}

std::vector<double> reparameterized_draws(const DiagonalGaussian& q, int count,
                                          Rng& rng) {
  const std::size_t d = q.dim();
  std::vector<double> z(static_cast<std::size_t>(count) * d);
  for (int j = 0; j < count; ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      z[static_cast<std::size_t>(j) * d + c] =
          q.mean[c] + std::exp(q.log_scale[c]) * rng.normal();
    }
  }
  return z;
}

double decoder_location(const CdCvaeModel& model, std::span<const double> x,
                        std::span<const double> z) {
  std::vector<double> in(static_cast<std::size_t>(model.d_x + model.d_z));
  std::copy(x.begin(), x.end(), in.begin());
  std::copy(z.begin(), z.end(), in.begin() + model.d_x);
  double out = 0.0;
  ad::mlp_eval(model.params, model.decoder_spec, model.dec, in,
               std::span<double>(&out, 1));
  return out;
}

double log_f(const CdCvaeModel& model, double y, std::span<const double> x,
             std::span<const double> z) {
  return log_pdf(model.family, y, decoder_location(model, x, z), model.sigma());
}

double log_s(const CdCvaeModel& model, double y, std::span<const double> x,
             std::span<const double> z) {
  return log_survival(model.family, y, decoder_location(model, x, z),
                      model.sigma());
}

double d_elbo_c_d_sigma(const CdCvaeModel& model, const BatchView& batch,
                        std::span<const double> z_draws, double temperature) {
  const std::size_t dz = static_cast<std::size_t>(model.d_z);
  if (z_draws.size() != batch.size() * dz) {
    throw std::invalid_argument("d_elbo_c_d_sigma: one z draw per row required");
  }
  const double sigma = model.sigma();
  double acc = 0.0;
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const std::size_t i = batch.indices[bi];
    const auto z = z_draws.subspan(bi * dz, dz);
    const double mu = decoder_location(model, batch.data->row(i), z);
    const double t = (batch.data->y[i] - mu) / sigma;
    if (model.family == Family::kGaussian) {
      if (batch.data->event[i] == 1) {
        acc += (t * t - 1.0) / sigma;
      } else {
        acc += temperature * std_normal_hazard(t) * t / sigma;
      }
    } else {
      const double et = std::exp(std::min(t, kGumbelExpCap));
      if (batch.data->event[i] == 1) {
        acc += (-(t + 1.0) + et * t) / sigma;
      } else {
        acc += temperature * et * t / sigma;
      }
    }
  }
  return acc / static_cast<double>(batch.size());
}

std::vector<double> predict_survival(const CdCvaeModel& model,
                                     std::span<const double> x,
                                     std::span<const double> ts,
                                     int n_prior_samples, std::uint64_t seed) {
  if (n_prior_samples < 1) {
    throw std::invalid_argument("predict_survival: need >= 1 prior sample");
  }
  Rng rng(seed);
  const std::size_t dz = static_cast<std::size_t>(model.d_z);
  std::vector<double> z(dz);
  std::vector<double> locs(static_cast<std::size_t>(n_prior_samples));
  for (int s = 0; s < n_prior_samples; ++s) {
    for (auto& v : z) v = rng.normal();
    locs[static_cast<std::size_t>(s)] = decoder_location(model, x, z);
  }
  const double sigma = model.sigma();
  std::vector<double> out;
  out.reserve(ts.size());
  for (double t : ts) {
    double acc = 0.0;
    for (double mu : locs) {
      acc += std::exp(std_log_survival(model.family, (t - mu) / sigma));
    }
    out.push_back(acc / static_cast<double>(n_prior_samples));
  }
  return out;
}

double model_c_index(const CdCvaeModel& model, const SurvivalDataset& data,
                     std::span<const std::size_t> rows, int n_prior_samples,
                     std::uint64_t seed) {
  std::vector<double> times;
  std::vector<int> events;
  std::vector<double> event_times;
  times.reserve(rows.size());
  events.reserve(rows.size());
  for (std::size_t i : rows) {
    times.push_back(data.y[i]);
    events.push_back(data.event[i]);
    if (data.event[i] == 1) event_times.push_back(data.y[i]);
  }
  if (event_times.size() < 10) {
    throw std::runtime_error("model_c_index: fewer than 10 event rows");
  }
  std::vector<double> qs;
  for (int q = 1; q <= 10; ++q) {
    qs.push_back(quantile(event_times, 0.1 * q));
  }
  std::vector<std::vector<double>> risk(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    risk[r] = predict_survival(model, data.row(rows[r]), qs, n_prior_samples, seed);
  }
  double acc = 0.0;
  std::vector<double> col(rows.size());
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    for (std::size_t r = 0; r < rows.size(); ++r) col[r] = risk[r][qi];
    acc += c_index(col, times, events);
  }
  return acc / static_cast<double>(qs.size());
}

TrainResult train(CdCvaeModel& model, const SurvivalDataset& data,
                  const SplitIndices& split, const EstimatorConfig& est,
                  const TrainConfig& cfg,
                  const std::function<void(const CdCvaeModel&, int)>& on_epoch) {
  est.validate();
  if (cfg.patience > cfg.max_epochs) {
    throw std::invalid_argument("patience must be <= max epochs");
  }
  if (split.train.empty() || split.validation.empty()) {
    throw std::invalid_argument("train: empty train or validation split");
  }

  Rng order_rng(cfg.seed);
  Rng eps_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  Rng dropout_rng(cfg.seed ^ 0xC2B2AE3D27D4EB4Full);

  // Fixed validation noise so the metric is a deterministic function of the
  // parameters across epochs.
  BatchView val_batch{&data, split.validation};
  std::vector<double> val_eps(eps_count(model, val_batch, est));
  {
    Rng val_rng(cfg.seed ^ 0x165667B19E3779F9ull);
    for (auto& v : val_eps) v = val_rng.normal();
  }

  auto validation_metric = [&]() {
    if (cfg.validation_metric == ValidationMetric::kElbo) {
      return objective_value(model, val_batch, est, val_eps);
    }
    return model_c_index(model, data, split.validation);
  };

  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));

  TrainResult result;
  std::vector<std::vector<double>> best_values;
  int bad_batches = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(order, order_rng);
    double epoch_obj = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      BatchView batch{&data, std::span<const std::size_t>(order).subspan(start, len)};
      std::vector<double> eps(eps_count(model, batch, est));
      for (auto& v : eps) v = eps_rng.normal();
      try {
        model.params.zero_grad();
        const double value = objective_backward(
            model, batch, est, eps, /*train_mode=*/true, &dropout_rng);
        // Ascent on the objective: flip gradients for the Adam minimizer.
        for (auto& p : model.params.params) {
          for (auto& g : p.grad) g = -g;
        }
        adam_step(model.params, cfg.learning_rate);
        epoch_obj += value;
        ++n_batches;
        bad_batches = 0;
      } catch (const std::runtime_error& err) {
        if (++bad_batches >= 3) {
          throw std::runtime_error("training diverged at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(start / bs) + ": " + err.what());
        }
        model.params.zero_grad();
      }
    }
    const double val = validation_metric();
    result.history.push_back(
        {epoch, n_batches > 0 ? epoch_obj / static_cast<double>(n_batches) : 0.0,
         val});
    if (on_epoch) on_epoch(model, epoch);

    if (result.history.size() == 1 || val > result.best_val) {
      result.best_val = val;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : model.params.params) best_values.push_back(p.value);
    }
    if (epoch - result.best_epoch >= cfg.patience) break;
  }

  if (!best_values.empty()) {
    for (std::size_t i = 0; i < model.params.params.size(); ++i) {
      model.params.params[i].value = best_values[i];
    }
  }
  return result;
}

namespace {
nlohmann::json spec_to_json(const ad::MlpSpec& s) {
  return {{"input_width", s.input_width},
          {"hidden", s.hidden},
          {"output_width", s.output_width},
          {"activation", s.activation == ad::Activation::kTanh ? "tanh" : "relu"},
          {"dropout", s.dropout}};
}

ad::MlpSpec spec_from_json(const nlohmann::json& j) {
  ad::MlpSpec s;
  s.input_width = j.at("input_width").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.output_width = j.at("output_width").get<int>();
  s.activation = j.at("activation").get<std::string>() == "tanh"
                     ? ad::Activation::kTanh
                     : ad::Activation::kRelu;
  s.dropout = j.at("dropout").get<double>();
  return s;
}
}  // namespace

void save_model(const CdCvaeModel& model, const TransformRecord& transform,
                std::uint64_t split_seed, const std::string& extra_json,
                const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["family"] = model.family == Family::kGaussian ? "gaussian" : "gumbel-min";
  meta["d_x"] = model.d_x;
  meta["d_z"] = model.d_z;
  meta["encoder"] = spec_to_json(model.encoder_spec);
  meta["decoder"] = spec_to_json(model.decoder_spec);
  meta["split_seed"] = split_seed;
  meta["transform"] = {{"feature_mean", transform.feature_mean},
                       {"feature_std", transform.feature_std},
                       {"standardized", transform.standardized},
                       {"log_time", transform.log_time},
                       {"y_mean", transform.y_mean},
                       {"y_std", transform.y_std}};
  meta["extra"] = extra_json.empty() ? nlohmann::json::object()
                                     : nlohmann::json::parse(extra_json);
  ad::save_checkpoint(model.params, meta.dump(), path);
}

CdCvaeModel load_model(const std::filesystem::path& path,
                       TransformRecord* transform, std::uint64_t* split_seed,
                       std::string* extra_json) {
  CdCvaeModel model;
  const auto meta = nlohmann::json::parse(ad::load_checkpoint(model.params, path));
  model.family = meta.at("family").get<std::string>() == "gaussian"
                     ? Family::kGaussian
                     : Family::kGumbelMin;
  model.d_x = meta.at("d_x").get<int>();
  model.d_z = meta.at("d_z").get<int>();
  model.encoder_spec = spec_from_json(meta.at("encoder"));
  model.decoder_spec = spec_from_json(meta.at("decoder"));
  model.enc = ad::bind_mlp(model.params, model.encoder_spec, "enc");
  model.dec = ad::bind_mlp(model.params, model.decoder_spec, "dec");
  model.log_sigma_id = model.params.find("log_sigma");
  if (model.log_sigma_id < 0) {
    throw std::runtime_error("checkpoint missing log_sigma");
  }
  if (transform != nullptr) {
    const auto& t = meta.at("transform");
    transform->feature_mean = t.at("feature_mean").get<std::vector<double>>();
    transform->feature_std = t.at("feature_std").get<std::vector<double>>();
    transform->standardized = t.at("standardized").get<bool>();
    transform->log_time = t.at("log_time").get<bool>();
    transform->y_mean = t.at("y_mean").get<double>();
    transform->y_std = t.at("y_std").get<double>();
  }
  if (split_seed != nullptr) *split_seed = meta.at("split_seed").get<std::uint64_t>();
  if (extra_json != nullptr) *extra_json = meta.at("extra").dump();
  return model;
}

}  // namespace cdvi
