#include "cdvi/nn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cdvi::ad {

namespace {
std::vector<int> layer_widths(const MlpSpec& spec) {
  std::vector<int> w;
  w.push_back(spec.input_width);
  for (int h : spec.hidden) w.push_back(h);
  w.push_back(spec.output_width);
  for (int x : w) {
    if (x <= 0) throw std::invalid_argument("mlp: zero-width layer");
  }
  return w;
}
}  // namespace

MlpHandle init_mlp(ParameterStore& store, const MlpSpec& spec,
                   std::string_view prefix, Rng& rng) {
  const auto widths = layer_widths(spec);
  MlpHandle h;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    const std::string base = std::string(prefix) + "." + std::to_string(l);
    h.w.push_back(store.add(base + ".W", std::move(w)));
    h.b.push_back(store.add(base + ".b", std::vector<double>(fan_out, 0.0)));
  }
  return h;
}

MlpHandle bind_mlp(const ParameterStore& store, const MlpSpec& spec,
                   std::string_view prefix) {
  const auto widths = layer_widths(spec);
  MlpHandle h;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string base = std::string(prefix) + "." + std::to_string(l);
    const int wi = store.find(base + ".W");
    const int bi = store.find(base + ".b");
    if (wi < 0 || bi < 0) {
      throw std::runtime_error("bind_mlp: missing parameter " + base);
    }
    h.w.push_back(wi);
    h.b.push_back(bi);
  }
  return h;
}

Tape::Id mlp_forward(Tape& tape, const MlpSpec& spec, const MlpHandle& h,
                     Tape::Id input, bool train, Rng* rng) {
  const auto widths = layer_widths(spec);
  Tape::Id x = input;
  const std::size_t n_layers = h.w.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    x = tape.affine(h.w[l], h.b[l], x, widths[l + 1], widths[l]);
    const bool is_hidden = l + 1 < n_layers;
    if (is_hidden) {
      x = spec.activation == Activation::kTanh ? tape.tanh(x) : tape.relu(x);
      const bool last_hidden = l + 2 == n_layers;
      if (last_hidden && train && spec.dropout > 0.0) {
        if (rng == nullptr) {
          throw std::invalid_argument("mlp_forward: dropout needs an rng");
        }
        std::vector<double> mask(static_cast<std::size_t>(widths[l + 1]));
        const double keep = 1.0 - spec.dropout;
        for (double& m : mask) {
          m = rng->uniform() < keep ? 1.0 / keep : 0.0;
        }
        x = tape.mul(x, tape.input(mask));
      }
    }
  }
  return x;
}

void mlp_eval(const ParameterStore& store, const MlpSpec& spec,
              const MlpHandle& h, std::span<const double> in,
              std::span<double> out) {
  const auto widths = layer_widths(spec);
  if (static_cast<int>(in.size()) != spec.input_width ||
      static_cast<int>(out.size()) != spec.output_width) {
    throw std::invalid_argument("mlp_eval: width mismatch");
  }
  std::vector<double> cur(in.begin(), in.end());
  std::vector<double> next;
  const std::size_t n_layers = h.w.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int rows = widths[l + 1];
    const int cols = widths[l];
    const double* w = store.at(h.w[l]).value.data();
    const double* b = store.at(h.b[l]).value.data();
    next.assign(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double acc = b[r];
      const double* wr = w + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) acc += wr[c] * cur[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = acc;
    }
    if (l + 1 < n_layers) {
      for (double& v : next) {
        v = spec.activation == Activation::kTanh ? std::tanh(v)
                                                 : (v > 0.0 ? v : 0.0);
      }
    }
    cur.swap(next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void save_checkpoint(const ParameterStore& store, const std::string& meta_json,
                     const std::filesystem::path& path) {
  nlohmann::json j;
  j["meta"] = nlohmann::json::parse(meta_json);
  j["step"] = store.step;
  nlohmann::json arrays = nlohmann::json::object();
  for (const auto& p : store.params) {
    arrays[p.name] = p.value;
  }
  j["params"] = std::move(arrays);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << j.dump(2) << "\n";
}

std::string load_checkpoint(ParameterStore& store,
                            const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  nlohmann::json j;
  in >> j;
  store.params.clear();
  store.step = j.at("step").get<std::int64_t>();
  for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
    store.add(it.key(), it.value().get<std::vector<double>>());
  }
  return j.at("meta").dump();
}

}  // namespace cdvi::ad
