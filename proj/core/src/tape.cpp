#include "cdvi/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdvi::ad {

int ParameterStore::add(std::string name, std::vector<double> value) {
  const std::size_t n = value.size();
  params.push_back(Param{std::move(name), std::move(value),
                         std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                         std::vector<double>(n, 0.0)});
  return static_cast<int>(params.size()) - 1;
}

int ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParameterStore::zero_grad() {
  for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

void adam_step(ParameterStore& store, double learning_rate, double beta1,
               double beta2, double eps) {
  for (const auto& p : store.params) {
    for (double g : p.grad) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("divergent step: non-finite gradient in '" +
                                 p.name + "'");
      }
    }
  }
  store.step += 1;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (auto& p : store.params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.m1[i] = beta1 * p.m1[i] + (1.0 - beta1) * g;
      p.m2[i] = beta2 * p.m2[i] + (1.0 - beta2) * g * g;
      const double mhat = p.m1[i] / c1;
      const double vhat = p.m2[i] / c2;
      p.value[i] -= learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
  store.zero_grad();
}

Tape::Id Tape::push(Node n, int len) {
  n.off = static_cast<std::uint32_t>(arena_.size());
  n.len = static_cast<std::uint32_t>(len);
  arena_.resize(arena_.size() + static_cast<std::size_t>(len), 0.0);
  nodes_.push_back(n);
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::input(std::span<const double> v) {
  Node n{};
  n.op = Op::kInput;
  const Id id = push(n, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), vals(nodes_.back()));
  return id;
}

Tape::Id Tape::param(int param_id) {
  const auto& p = store_->at(param_id);
  Node n{};
  n.op = Op::kParam;
  n.pid = param_id;
  const Id id = push(n, static_cast<int>(p.value.size()));
  std::copy(p.value.begin(), p.value.end(), vals(nodes_.back()));
  return id;
}

Tape::Id Tape::affine(int w_param, int b_param, Id x, int rows, int cols) {
  const Node& xn = node(x);
  if (static_cast<int>(xn.len) != cols) {
    throw std::invalid_argument("affine: input width mismatch");
  }
  Node n{};
  n.op = Op::kAffine;
  n.a = x;
  n.pid = w_param;
  n.pid2 = b_param;
  n.i0 = rows;
  n.i1 = cols;
  const Id id = push(n, rows);
  const double* w = store_->at(w_param).value.data();
  const double* b = store_->at(b_param).value.data();
  const double* xv = vals(node(x));
  double* out = vals(nodes_.back());
  for (int r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += wr[c] * xv[c];
    out[r] = acc;
  }
  return id;
}

#define CDVI_UNARY(NAME, OPTAG, EXPR)                         \
  Tape::Id Tape::NAME(Id a) {                                 \
    Node n{};                                                 \
    n.op = OPTAG;                                             \
    n.a = a;                                                  \
    const Id id = push(n, static_cast<int>(node(a).len));     \
    const double* av = vals(node(a));                         \
    double* out = vals(nodes_.back());                        \
    for (std::uint32_t i = 0; i < node(a).len; ++i) {         \
      const double x = av[i];                                 \
      out[i] = (EXPR);                                        \
    }                                                         \
    return id;                                                \
  }

CDVI_UNARY(tanh, Op::kTanh, std::tanh(x))
CDVI_UNARY(relu, Op::kRelu, x > 0.0 ? x : 0.0)
CDVI_UNARY(exp, Op::kExp, std::exp(x))
CDVI_UNARY(log, Op::kLog, std::log(x))
CDVI_UNARY(square, Op::kSquare, x* x)
CDVI_UNARY(neg, Op::kNeg, -x)
#undef CDVI_UNARY

namespace {
void check_same_len(std::uint32_t a, std::uint32_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}
}  // namespace

Tape::Id Tape::add(Id a, Id b) {
  check_same_len(node(a).len, node(b).len, "add");
  Node n{};
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  const Id id = push(n, static_cast<int>(node(a).len));
  const double* av = vals(node(a));
  const double* bv = vals(node(b));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(a).len; ++i) out[i] = av[i] + bv[i];
  return id;
}

Tape::Id Tape::sub(Id a, Id b) {
  check_same_len(node(a).len, node(b).len, "sub");
  Node n{};
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  const Id id = push(n, static_cast<int>(node(a).len));
  const double* av = vals(node(a));
  const double* bv = vals(node(b));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(a).len; ++i) out[i] = av[i] - bv[i];
  return id;
}

Tape::Id Tape::mul(Id a, Id b) {
  check_same_len(node(a).len, node(b).len, "mul");
  Node n{};
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  const Id id = push(n, static_cast<int>(node(a).len));
  const double* av = vals(node(a));
  const double* bv = vals(node(b));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(a).len; ++i) out[i] = av[i] * bv[i];
  return id;
}

Tape::Id Tape::scale_add(Id a, double mul, double add) {
  Node n{};
  n.op = Op::kScaleAdd;
  n.a = a;
  n.c0 = mul;
  n.c1 = add;
  const Id id = push(n, static_cast<int>(node(a).len));
  const double* av = vals(node(a));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(a).len; ++i) out[i] = mul * av[i] + add;
  return id;
}

Tape::Id Tape::const_minus(double c, Id a) {
  Node n{};
  n.op = Op::kConstMinus;
  n.a = a;
  n.c0 = c;
  const Id id = push(n, static_cast<int>(node(a).len));
  const double* av = vals(node(a));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(a).len; ++i) out[i] = c - av[i];
  return id;
}

Tape::Id Tape::log_pdf_std(Family family, Id t) {
  Node n{};
  n.op = Op::kLogPdfStd;
  n.a = t;
  n.family = family;
  const Id id = push(n, static_cast<int>(node(t).len));
  const double* tv = vals(node(t));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(t).len; ++i) out[i] = std_log_pdf(family, tv[i]);
  return id;
}

Tape::Id Tape::log_surv_std(Family family, Id t) {
  Node n{};
  n.op = Op::kLogSurvStd;
  n.a = t;
  n.family = family;
  const Id id = push(n, static_cast<int>(node(t).len));
  const double* tv = vals(node(t));
  double* out = vals(nodes_.back());
  for (std::uint32_t i = 0; i < node(t).len; ++i) {
    out[i] = std_log_survival(family, tv[i]);
  }
  return id;
}

Tape::Id Tape::sum(Id a) {
  Node n{};
  n.op = Op::kSum;
  n.a = a;
  const Id id = push(n, 1);
  const double* av = vals(node(a));
  double acc = 0.0;
  for (std::uint32_t i = 0; i < node(a).len; ++i) acc += av[i];
  *vals(nodes_.back()) = acc;
  return id;
}

Tape::Id Tape::mean(Id a) {
  Node n{};
  n.op = Op::kMean;
  n.a = a;
  const Id id = push(n, 1);
  const double* av = vals(node(a));
  double acc = 0.0;
  for (std::uint32_t i = 0; i < node(a).len; ++i) acc += av[i];
  *vals(nodes_.back()) = acc / static_cast<double>(node(a).len);
  return id;
}

Tape::Id Tape::logsumexp(Id a) {
  Node n{};
  n.op = Op::kLogSumExp;
  n.a = a;
  const Id id = push(n, 1);
  const Node& an = node(a);
  *vals(nodes_.back()) =
      log_sum_exp(std::span<const double>(vals(an), an.len));
  return id;
}

Tape::Id Tape::slice(Id a, int offset, int len) {
  if (offset < 0 || len < 0 ||
      static_cast<std::uint32_t>(offset + len) > node(a).len) {
    throw std::invalid_argument("slice: out of range");
  }
  Node n{};
  n.op = Op::kSlice;
  n.a = a;
  n.i0 = offset;
  const Id id = push(n, len);
  const double* av = vals(node(a));
  double* out = vals(nodes_.back());
  for (int i = 0; i < len; ++i) out[i] = av[offset + i];
  return id;
}

Tape::Id Tape::concat(Id a, Id b) {
  Node n{};
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  const int la = static_cast<int>(node(a).len);
  const int lb = static_cast<int>(node(b).len);
  const Id id = push(n, la + lb);
  double* out = vals(nodes_.back());
  const double* av = vals(node(a));
  const double* bv = vals(node(b));
  std::copy(av, av + la, out);
  std::copy(bv, bv + lb, out + la);
  return id;
}

Tape::Id Tape::broadcast(Id scalar, int n_out) {
  if (node(scalar).len != 1) {
    throw std::invalid_argument("broadcast: source must be scalar");
  }
  Node n{};
  n.op = Op::kBroadcast;
  n.a = scalar;
  const Id id = push(n, n_out);
  const double v = *vals(node(scalar));
  double* out = vals(nodes_.back());
  std::fill(out, out + n_out, v);
  return id;
}

Tape::Id Tape::stack(std::span<const Id> scalars) {
  Node n{};
  n.op = Op::kStack;
  n.i0 = static_cast<int>(stack_parents_.size());
  n.i1 = static_cast<int>(scalars.size());
  for (Id s : scalars) {
    if (node(s).len != 1) {
      throw std::invalid_argument("stack: parents must be scalars");
    }
    stack_parents_.push_back(s);
  }
  const Id id = push(n, static_cast<int>(scalars.size()));
  double* out = vals(nodes_.back());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    out[i] = *vals(node(scalars[i]));
  }
  return id;
}

std::span<const double> Tape::value(Id id) const {
  const Node& n = node(id);
  return {vals(n), n.len};
}

double Tape::scalar(Id id) const {
  const Node& n = node(id);
  if (n.len != 1) throw std::invalid_argument("scalar: node is not scalar");
  return *vals(n);
}

std::span<const double> Tape::grad(Id id) const {
  const Node& n = node(id);
  return {grads(n), n.len};
}

void Tape::backward(Id root) {
  const Node& rn = node(root);
  if (rn.len != 1) {
    throw std::invalid_argument("backward: root must be scalar");
  }
  grad_arena_.assign(arena_.size(), 0.0);
  grads(rn)[0] = 1.0;

  for (Id id = root; id >= 0; --id) {
    const Node& n = node(id);
    const double* g = grads(n);
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam: {
        auto& p = store_->at(n.pid);
        for (std::uint32_t i = 0; i < n.len; ++i) p.grad[i] += g[i];
        break;
      }
      case Op::kAffine: {
        auto& wp = store_->at(n.pid);
        auto& bp = store_->at(n.pid2);
        const Node& xn = node(n.a);
        const double* xv = vals(xn);
        const double* w = wp.value.data();
        double* gx = grads(xn);
        const int rows = n.i0;
        const int cols = n.i1;
        for (int r = 0; r < rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          double* wgr = wp.grad.data() + static_cast<std::size_t>(r) * cols;
          const double* wr = w + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) {
            wgr[c] += gr * xv[c];
            gx[c] += gr * wr[c];
          }
          bp.grad[r] += gr;
        }
        break;
      }
      case Op::kTanh: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* out = vals(n);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          ga[i] += g[i] * (1.0 - out[i] * out[i]);
        }
        break;
      }
      case Op::kRelu: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* av = vals(an);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          if (av[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::kExp: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* out = vals(n);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          if (g[i] != 0.0) ga[i] += g[i] * out[i];
        }
        break;
      }
      case Op::kLog: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* av = vals(an);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          if (g[i] != 0.0) ga[i] += g[i] / av[i];
        }
        break;
      }
      case Op::kSquare: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* av = vals(an);
        for (std::uint32_t i = 0; i < n.len; ++i) ga[i] += 2.0 * av[i] * g[i];
        break;
      }
      case Op::kNeg: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        for (std::uint32_t i = 0; i < n.len; ++i) ga[i] -= g[i];
        break;
      }
      case Op::kAdd: {
        double* ga = grads(node(n.a));
        double* gb = grads(node(n.b));
        for (std::uint32_t i = 0; i < n.len; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        double* ga = grads(node(n.a));
        double* gb = grads(node(n.b));
        for (std::uint32_t i = 0; i < n.len; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const Node& an = node(n.a);
        const Node& bn = node(n.b);
        double* ga = grads(an);
        double* gb = grads(bn);
        const double* av = vals(an);
        const double* bv = vals(bn);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          if (g[i] == 0.0) continue;
          ga[i] += g[i] * bv[i];
          gb[i] += g[i] * av[i];
        }
        break;
      }
      case Op::kScaleAdd: {
        double* ga = grads(node(n.a));
        for (std::uint32_t i = 0; i < n.len; ++i) ga[i] += g[i] * n.c0;
        break;
      }
      case Op::kConstMinus: {
        double* ga = grads(node(n.a));
        for (std::uint32_t i = 0; i < n.len; ++i) ga[i] -= g[i];
        break;
      }
      case Op::kLogPdfStd: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* tv = vals(an);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          if (g[i] == 0.0) continue;
          if (n.family == Family::kGaussian) {
            ga[i] += g[i] * (-tv[i]);
          } else {
            ga[i] += g[i] * (1.0 - std::exp(std::min(tv[i], kGumbelExpCap)));
          }
        }
        break;
      }
      case Op::kLogSurvStd: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* tv = vals(an);
        const double* out = vals(n);
        for (std::uint32_t i = 0; i < n.len; ++i) {
          if (g[i] == 0.0) continue;
          if (n.family == Family::kGaussian) {
            ga[i] -= g[i] * std_normal_hazard(tv[i]);
          } else {
            // d(-e^t)/dt equals the stored value.
            ga[i] += g[i] * out[i];
          }
        }
        break;
      }
      case Op::kSum: {
        double* ga = grads(node(n.a));
        const std::uint32_t la = node(n.a).len;
        for (std::uint32_t i = 0; i < la; ++i) ga[i] += g[0];
        break;
      }
      case Op::kMean: {
        double* ga = grads(node(n.a));
        const std::uint32_t la = node(n.a).len;
        const double s = g[0] / static_cast<double>(la);
        for (std::uint32_t i = 0; i < la; ++i) ga[i] += s;
        break;
      }
      case Op::kLogSumExp: {
        const Node& an = node(n.a);
        double* ga = grads(an);
        const double* av = vals(an);
        const double out = *vals(n);
        for (std::uint32_t i = 0; i < an.len; ++i) {
          ga[i] += g[0] * std::exp(av[i] - out);
        }
        break;
      }
      case Op::kSlice: {
        double* ga = grads(node(n.a));
        for (std::uint32_t i = 0; i < n.len; ++i) ga[n.i0 + i] += g[i];
        break;
      }
      case Op::kConcat: {
        const Node& an = node(n.a);
        const Node& bn = node(n.b);
        double* ga = grads(an);
        double* gb = grads(bn);
        for (std::uint32_t i = 0; i < an.len; ++i) ga[i] += g[i];
        for (std::uint32_t i = 0; i < bn.len; ++i) gb[i] += g[an.len + i];
        break;
      }
      case Op::kBroadcast: {
        double* ga = grads(node(n.a));
        double acc = 0.0;
        for (std::uint32_t i = 0; i < n.len; ++i) acc += g[i];
        ga[0] += acc;
        break;
      }
      case Op::kStack: {
        for (int i = 0; i < n.i1; ++i) {
          const Node& pn = node(stack_parents_[static_cast<std::size_t>(n.i0 + i)]);
          grads(pn)[0] += g[i];
        }
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  arena_.clear();
  grad_arena_.clear();
  stack_parents_.clear();
}

}  // namespace cdvi::ad
