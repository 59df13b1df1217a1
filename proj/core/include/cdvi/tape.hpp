#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdvi/math.hpp"

namespace cdvi::ad {

// Named flat parameter arrays with matching gradient and Adam moment slots.
struct ParameterStore {
  struct Param {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m1;
    std::vector<double> m2;
  };

  std::vector<Param> params;
  std::int64_t step = 0;

  int add(std::string name, std::vector<double> value);
  int find(std::string_view name) const;  // -1 when absent
  Param& at(int id) { return params[static_cast<std::size_t>(id)]; }
  const Param& at(int id) const { return params[static_cast<std::size_t>(id)]; }
  void zero_grad();
  std::size_t total_size() const;
};

// Bias-corrected adaptive-moment update; increments the step counter and
// clears gradients. Throws std::runtime_error("divergent step ...") naming
// the first parameter with a non-finite gradient.
void adam_step(ParameterStore& store, double learning_rate, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Central finite differences of an arbitrary loss over every parameter
// coordinate. The loss callback must be deterministic (replay any noise).
// Returns one gradient array per parameter, in store order.
template <typename Loss>
std::vector<std::vector<double>> finite_diff_grad(ParameterStore& store,
                                                  Loss&& loss, double h) {
  std::vector<std::vector<double>> out;
  out.reserve(store.params.size());
  for (auto& p : store.params) {
    std::vector<double> g(p.value.size(), 0.0);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = loss();
      p.value[i] = saved - h;
      const double dn = loss();
      p.value[i] = saved;
      g[i] = (up - dn) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Reverse-mode tape over vector-valued nodes. Nodes are created in
// topological order; a single backward pass from a scalar root accumulates
// parameter gradients into the bound ParameterStore.
class Tape {
 public:
  using Id = int;

  explicit Tape(ParameterStore& store) : store_(&store) {}

  // Leaves.
  Id input(std::span<const double> v);
  Id constant(double c) { return input(std::span<const double>(&c, 1)); }
  Id param(int param_id);

  // y = W x + b with W row-major (rows x cols), b length rows.
  Id affine(int w_param, int b_param, Id x, int rows, int cols);

  // Elementwise.
  Id tanh(Id a);
  Id relu(Id a);
  Id exp(Id a);
  Id log(Id a);
  Id square(Id a);
  Id neg(Id a);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale_add(Id a, double mul, double add);  // mul * a + add
  Id const_minus(double c, Id a);              // c - a

  // Standardized family log-densities as primitives; the Gaussian survival
  // derivative is the negative standard normal hazard.
  Id log_pdf_std(Family family, Id t);
  Id log_surv_std(Family family, Id t);

  // Reductions and shape ops.
  Id sum(Id a);
  Id mean(Id a);
  Id logsumexp(Id a);
  Id slice(Id a, int offset, int len);
  Id concat(Id a, Id b);
  Id broadcast(Id scalar, int n);
  Id stack(std::span<const Id> scalars);

  std::span<const double> value(Id id) const;
  double scalar(Id id) const;
  std::span<const double> grad(Id id) const;  // valid after backward()

  // Root must be scalar; every reachable parameter gradient is accumulated
  // exactly once per contribution path.
  void backward(Id root);

  // Drops all nodes but keeps arena capacity.
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kInput, kParam, kAffine, kTanh, kRelu, kExp, kLog, kSquare, kNeg,
    kAdd, kSub, kMul, kScaleAdd, kConstMinus, kLogPdfStd, kLogSurvStd,
    kSum, kMean, kLogSumExp, kSlice, kConcat, kBroadcast, kStack,
  };

  struct Node {
    Op op;
    Id a = -1;
    Id b = -1;
    int pid = -1;   // parameter id (kParam: the leaf; kAffine: W)
    int pid2 = -1;  // kAffine: b
    double c0 = 0.0;
    double c1 = 0.0;
    int i0 = 0;  // kAffine rows / kSlice offset / kStack parents offset
    int i1 = 0;  // kAffine cols / kStack parent count
    Family family = Family::kGaussian;
    std::uint32_t off = 0;  // value/grad offset in the arena
    std::uint32_t len = 0;
  };

  Id push(Node n, int len);
  double* vals(const Node& n) { return arena_.data() + n.off; }
  const double* vals(const Node& n) const { return arena_.data() + n.off; }
  double* grads(const Node& n) { return grad_arena_.data() + n.off; }
  const double* grads(const Node& n) const { return grad_arena_.data() + n.off; }
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  std::vector<double> arena_;
  std::vector<double> grad_arena_;
  std::vector<Id> stack_parents_;
  ParameterStore* store_;
};

}  // namespace cdvi::ad
