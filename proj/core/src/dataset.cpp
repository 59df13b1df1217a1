#include "cdvi/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cdvi/math.hpp"
#include "cdvi/rng.hpp"

namespace cdvi {

double TransformRecord::to_model_time(double t) const {
  if (log_time) t = std::log(t);
  if (standardized) t = (t - y_mean) / y_std;
  return t;
}

double TransformRecord::to_original_time(double t) const {
  if (standardized) t = t * y_std + y_mean;
  if (log_time) t = std::exp(t);
  return t;
}

double SurvivalDataset::censor_rate() const {
  if (event.empty()) return 0.0;
  std::size_t censored = 0;
  for (int d : event) censored += d == 0 ? 1 : 0;
  return static_cast<double>(censored) / static_cast<double>(event.size());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no,
                  const std::string& column) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first != last && *first == ' ') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("non-numeric cell at row " +
                             std::to_string(line_no) + ", column '" + column +
                             "': '" + cell + "'");
  }
  return v;
}

}  // namespace

SurvivalDataset load_csv(const std::filesystem::path& path,
                         const std::string& time_column,
                         const std::string& event_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path.string());
  const auto header = split_line(line);

  int time_idx = -1;
  int event_idx = -1;
  SurvivalDataset ds;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == time_column) {
      time_idx = static_cast<int>(i);
    } else if (header[i] == event_column) {
      event_idx = static_cast<int>(i);
    } else {
      ds.feature_names.push_back(header[i]);
    }
  }
  if (time_idx < 0) throw std::runtime_error("missing column '" + time_column + "'");
  if (event_idx < 0) throw std::runtime_error("missing column '" + event_column + "'");
  ds.d_x = static_cast<int>(ds.feature_names.size());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("row " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = parse_cell(cells[i], line_no, header[i]);
      if (static_cast<int>(i) == time_idx) {
        ds.y.push_back(v);
      } else if (static_cast<int>(i) == event_idx) {
        if (v != 0.0 && v != 1.0) {
          throw std::runtime_error("event value out of range at row " +
                                   std::to_string(line_no));
        }
        ds.event.push_back(static_cast<int>(v));
      } else {
        ds.x.push_back(v);
      }
    }
  }
  return ds;
}

void save_csv(const SurvivalDataset& ds, const std::filesystem::path& path,
              const std::string& time_column, const std::string& event_column) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (const auto& f : ds.feature_names) out << f << ",";
  out << time_column << "," << event_column << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto xi = ds.row(i);
    for (double v : xi) out << v << ",";
    out << ds.y[i] << "," << ds.event[i] << "\n";
  }
}

void save_truth_csv(const SurvivalDataset& ds,
                    const std::filesystem::path& path) {
  if (!ds.has_truth()) throw std::runtime_error("dataset has no latent truth");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "z1,z2,u,c\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.truth.z1[i] << "," << ds.truth.z2[i] << "," << ds.truth.u[i]
        << "," << ds.truth.c[i] << "\n";
  }
}

SplitIndices split(const SurvivalDataset& ds, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 5) throw std::invalid_argument("split: need at least 5 rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  shuffle(idx, rng);
  const std::size_t i0 = n * 6 / 10;
  const std::size_t i1 = n * 8 / 10;
  SplitIndices s;
  s.seed = seed;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(i0));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(i0),
                      idx.begin() + static_cast<std::ptrdiff_t>(i1));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(i1), idx.end());
  return s;
}

SurvivalDataset standardize(const SurvivalDataset& ds,
                            std::span<const std::size_t> fit_indices,
                            bool log_time) {
  if (fit_indices.empty()) {
    throw std::invalid_argument("standardize: empty fit set");
  }
  SurvivalDataset out = ds;
  const double nf = static_cast<double>(fit_indices.size());

  out.transform.feature_mean.assign(static_cast<std::size_t>(ds.d_x), 0.0);
  out.transform.feature_std.assign(static_cast<std::size_t>(ds.d_x), 0.0);
  for (int j = 0; j < ds.d_x; ++j) {
    double mean = 0.0;
    for (std::size_t i : fit_indices) mean += ds.row(i)[static_cast<std::size_t>(j)];
    mean /= nf;
    double var = 0.0;
    for (std::size_t i : fit_indices) {
      const double d = ds.row(i)[static_cast<std::size_t>(j)] - mean;
      var += d * d;
    }
    var /= nf;
    if (!(var > 0.0)) {
      throw std::runtime_error("zero-variance feature '" +
                               ds.feature_names[static_cast<std::size_t>(j)] + "'");
    }
    out.transform.feature_mean[static_cast<std::size_t>(j)] = mean;
    out.transform.feature_std[static_cast<std::size_t>(j)] = std::sqrt(var);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.d_x; ++j) {
      const std::size_t k = i * static_cast<std::size_t>(ds.d_x) +
                            static_cast<std::size_t>(j);
      out.x[k] = (ds.x[k] - out.transform.feature_mean[static_cast<std::size_t>(j)]) /
                 out.transform.feature_std[static_cast<std::size_t>(j)];
    }
  }

  std::vector<double> ty(ds.y);
  if (log_time) {
    for (double& v : ty) {
      if (!(v > 0.0)) {
        throw std::runtime_error("log time transform needs positive times");
      }
      v = std::log(v);
    }
  }
  double ym = 0.0;
  for (std::size_t i : fit_indices) ym += ty[i];
  ym /= nf;
  double yv = 0.0;
  for (std::size_t i : fit_indices) {
    const double d = ty[i] - ym;
    yv += d * d;
  }
  yv /= nf;
  if (!(yv > 0.0)) throw std::runtime_error("zero-variance time column");
  const double ys = std::sqrt(yv);
  for (std::size_t i = 0; i < ds.size(); ++i) out.y[i] = (ty[i] - ym) / ys;

  out.transform.standardized = true;
  out.transform.log_time = log_time;
  out.transform.y_mean = ym;
  out.transform.y_std = ys;
  return out;
}

std::string summary_json(const SurvivalDataset& ds) {
  nlohmann::json j;
  j["n"] = ds.size();
  j["d_x"] = ds.d_x;
  j["censor_rate"] = ds.censor_rate();
  nlohmann::json q = nlohmann::json::object();
  if (!ds.y.empty()) {
    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      q[std::to_string(static_cast<int>(p * 100))] = quantile(ds.y, p);
    }
  }
  j["time_quantiles"] = std::move(q);
  return j.dump(2);
}

}  // namespace cdvi
