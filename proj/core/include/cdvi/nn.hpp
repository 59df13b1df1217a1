#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdvi/rng.hpp"
#include "cdvi/tape.hpp"

namespace cdvi::ad {

enum class Activation { kTanh, kRelu };

struct MlpSpec {
  int input_width = 0;
  std::vector<int> hidden;
  int output_width = 0;
  Activation activation = Activation::kTanh;
  double dropout = 0.0;  // applied to the last hidden layer in train mode
};

// Parameter ids of one MLP inside a store, bound once at construction.
struct MlpHandle {
  std::vector<int> w;
  std::vector<int> b;
};

// Fan-scaled symmetric uniform init (bound sqrt(6/(fan_in+fan_out))), zero
// biases. Throws on zero-width layers. Deterministic given the rng state.
MlpHandle init_mlp(ParameterStore& store, const MlpSpec& spec,
                   std::string_view prefix, Rng& rng);

// Rebinds the handle of an already-initialized MLP by name.
MlpHandle bind_mlp(const ParameterStore& store, const MlpSpec& spec,
                   std::string_view prefix);

// Differentiable forward pass. In train mode the last hidden layer is
// multiplied by an inverted-scaling dropout mask drawn from rng, so eval-mode
// outputs match the train-mode expectation.
Tape::Id mlp_forward(Tape& tape, const MlpSpec& spec, const MlpHandle& h,
                     Tape::Id input, bool train = false, Rng* rng = nullptr);

// Plain forward pass on doubles (eval mode, no dropout, no graph).
void mlp_eval(const ParameterStore& store, const MlpSpec& spec,
              const MlpHandle& h, std::span<const double> in,
              std::span<double> out);

// Checkpoint persistence: JSON with shortest-round-trip decimal floats, so
// save -> load is value-exact. `meta` is an arbitrary JSON object string the
// caller wants carried alongside the arrays.
void save_checkpoint(const ParameterStore& store, const std::string& meta_json,
                     const std::filesystem::path& path);
std::string load_checkpoint(ParameterStore& store,
                            const std::filesystem::path& path);

}  // namespace cdvi::ad
