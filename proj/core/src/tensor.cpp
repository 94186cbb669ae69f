#include "frebis/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <type_traits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "frebis/errors.hpp"

namespace frebis {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_recording = true;

struct Dims2 {
  std::size_t rows;
  std::size_t cols;
};

Dims2 dims2(const Shape& s) {
  switch (s.size()) {
    case 0: return {1, 1};
    case 1: return {1, s[0]};
    case 2: return {s[0], s[1]};
    default: throw ShapeError("tensor rank > 2 is not supported: " + shape_string(s));
  }
}

// Branch-free exponent scan so the loop vectorizes.
template <class T>
void check_finite(std::span<const T> values, const char* op) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits exponent = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  Bits bad = 0;
  for (const T v : values) {
    const Bits b = std::bit_cast<Bits>(v);
    bad |= static_cast<Bits>((b & exponent) == exponent);
  }
  if (bad != 0) throw NumericError(std::string("non-finite value produced by ") + op);
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

bool grad_recording_enabled() { return g_recording; }

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

// ---- Tensor members ---------------------------------------------------------

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_string(shape));
  }
  dims2(shape);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, T(0)));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({}, {value});
}

template <class T>
Tensor<T> Tensor<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<T> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(values));
}

template <class T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  auto t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <class T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                                 BackwardFn backward) {
  auto out = from(std::move(shape), std::move(values));
  if (!g_recording) return out;
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.defined() && p.requires_grad(); });
  if (!needs) return out;
  auto& node = *out.node_;
  node.requires_grad = true;
  node.parents.reserve(parents.size());
  for (const auto& p : parents) node.parents.push_back(p.node_);
  node.backward = [fn = std::move(backward)](Node& self) {
    std::vector<Tensor> handles;
    handles.reserve(self.parents.size());
    for (const auto& p : self.parents) handles.push_back(Tensor(p));
    fn(self, std::span<Tensor>(handles));
  };
  return out;
}

template <class T>
const Shape& Tensor<T>::shape() const {
  return node_->shape;
}
template <class T>
std::size_t Tensor<T>::numel() const {
  return node_->value.size();
}
template <class T>
std::size_t Tensor<T>::rows() const {
  return dims2(node_->shape).rows;
}
template <class T>
std::size_t Tensor<T>::cols() const {
  return dims2(node_->shape).cols;
}
template <class T>
std::span<const T> Tensor<T>::values() const {
  return node_->value;
}
template <class T>
std::span<T> Tensor<T>::mutable_values() {
  return node_->value;
}
template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}
template <class T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  const auto d = dims2(node_->shape);
  if (row >= d.rows || col >= d.cols) throw std::out_of_range("tensor index out of range");
  return node_->value[row * d.cols + col];
}
template <class T>
bool Tensor<T>::requires_grad() const {
  return node_->requires_grad;
}
template <class T>
void Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
}
template <class T>
bool Tensor<T>::has_grad() const {
  return !node_->grad.empty();
}
template <class T>
std::span<const T> Tensor<T>::grad() const {
  return node_->grad;
}
template <class T>
std::span<T> Tensor<T>::grad_buffer() {
  node_->ensure_grad();
  return node_->grad;
}
template <class T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->value);
}

template <class T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar, got shape " + shape_string(shape()));
  }
  // Post-order DFS gives a topological order; parents are visited in the
  // order they were recorded so the traversal is deterministic.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---- helpers ----------------------------------------------------------------

namespace {

template <class T>
std::vector<T>& parent_grad(std::span<Tensor<T>> parents, std::size_t i) {
  auto& node = *parents[i].node();
  node.ensure_grad();
  return node.grad;
}

template <class T>
bool wants_grad(std::span<Tensor<T>> parents, std::size_t i) {
  return parents[i].requires_grad();
}

// y = f(x); dx += g * df(x, y)
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, DF df) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  check_finite<T>(out, name);
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [df](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        const auto xv = parents[0].values();
        auto& gx = parent_grad(parents, 0);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * df(xv[i], self.value[i]);
      });
}

struct BroadcastPlan {
  Shape out_shape;
  std::size_t rows, cols;
  std::size_t a_rs, a_cs, b_rs, b_cs;
  bool same;
};

BroadcastPlan plan_broadcast(const Shape& sa, const Shape& sb) {
  if (sa == sb) {
    const auto d = dims2(sa);
    return {sa, d.rows, d.cols, d.cols, 1, d.cols, 1, true};
  }
  const auto a = dims2(sa);
  const auto b = dims2(sb);
  auto pick = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError("shapes " + shape_string(sa) + " and " + shape_string(sb) +
                     " are not broadcast-compatible");
  };
  const std::size_t r = pick(a.rows, b.rows);
  const std::size_t c = pick(a.cols, b.cols);
  return {Shape{r, c},
          r,
          c,
          a.rows == 1 ? 0 : a.cols,
          a.cols == 1 ? std::size_t{0} : std::size_t{1},
          b.rows == 1 ? 0 : b.cols,
          b.cols == 1 ? std::size_t{0} : std::size_t{1},
          false};
}

// z = f(a, b); da += g * dfa(a, b, z); db += g * dfb(a, b, z)
template <class T, class F, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA dfa, DB dfb) {
  const auto plan = plan_broadcast(a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(plan.rows * plan.cols);
  if (plan.same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (std::size_t r = 0; r < plan.rows; ++r) {
      for (std::size_t c = 0; c < plan.cols; ++c) {
        out[r * plan.cols + c] = f(av[r * plan.a_rs + c * plan.a_cs], bv[r * plan.b_rs + c * plan.b_cs]);
      }
    }
  }
  check_finite<T>(out, name);
  return Tensor<T>::make_result(
      plan.out_shape, std::move(out), {a, b},
      [plan, dfa, dfb](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        const auto av = parents[0].values();
        const auto bv = parents[1].values();
        const bool ga_on = wants_grad(parents, 0);
        const bool gb_on = wants_grad(parents, 1);
        T* ga = ga_on ? parent_grad(parents, 0).data() : nullptr;
        T* gb = gb_on ? parent_grad(parents, 1).data() : nullptr;
        for (std::size_t r = 0; r < plan.rows; ++r) {
          for (std::size_t c = 0; c < plan.cols; ++c) {
            const std::size_t o = r * plan.cols + c;
            const std::size_t ia = r * plan.a_rs + c * plan.a_cs;
            const std::size_t ib = r * plan.b_rs + c * plan.b_cs;
            const T g = self.grad[o];
            if (ga_on) ga[ia] += g * dfa(av[ia], bv[ib], self.value[o]);
            if (gb_on) gb[ib] += g * dfb(av[ia], bv[ib], self.value[o]);
          }
        }
      });
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---- binary -----------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T, T y, T z) { return -z / y; });
}

// ---- unary ------------------------------------------------------------------

template <class T>
Tensor<T> softplus(const Tensor<T>& x, T sharpness) {
  if (!(sharpness > T(0))) throw std::invalid_argument("softplus sharpness must be positive");
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const T s = sharpness;
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  {
    // Evaluate into Eigen-owned (aligned) arrays: on a heap buffer the split
    // between scalar peel and packet math moves with the address, and scalar
    // exp/log1p round differently from the packet versions.
    const Eigen::Map<const Arr> in(xv.data(), static_cast<Eigen::Index>(xv.size()));
    const Arr z = s * in;
    const Arr y = (z.max(T(0)) + (-z.abs()).exp().log1p()) / s;
    std::copy(y.data(), y.data() + y.size(), out.begin());
  }
  check_finite<T>(out, "softplus");
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x}, [s](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        auto& gx = parent_grad(parents, 0);
        const auto n = static_cast<Eigen::Index>(gx.size());
        // sigmoid(s x) = 1 - exp(-s y)
        const Eigen::Map<const Arr> y(self.value.data(), n);
        const Arr sig = T(1) - (-s * y).exp();
        for (Eigen::Index i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)] * sig[i];
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (const T v : x.values()) {
    if (v < T(0)) throw NumericError("sqrt of negative value");
  }
  return unary(
      x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary(
      x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary(
      x, "add_scalar", [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
  return unary(
      x, "clamp_min", [floor](T v) { return v > floor ? v : floor; },
      [floor](T v, T) { return v > floor ? T(1) : T(0); });
}

template <class T>
Tensor<T> elementwise(ElementwiseOp op, std::span<const Tensor<T>> inputs, T sharpness) {
  const bool is_binary = op == ElementwiseOp::add || op == ElementwiseOp::sub ||
                         op == ElementwiseOp::mul || op == ElementwiseOp::div;
  if (inputs.size() != (is_binary ? 2u : 1u)) {
    throw std::invalid_argument("elementwise: wrong number of inputs");
  }
  const auto& a = inputs[0];
  switch (op) {
    case ElementwiseOp::add: return add(a, inputs[1]);
    case ElementwiseOp::sub: return sub(a, inputs[1]);
    case ElementwiseOp::mul: return mul(a, inputs[1]);
    case ElementwiseOp::div: return div(a, inputs[1]);
    case ElementwiseOp::softplus: return softplus(a, sharpness);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::sigmoid: return sigmoid(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::sqrt: return sqrt(a);
    case ElementwiseOp::square: return square(a);
    case ElementwiseOp::abs: return abs(a);
    case ElementwiseOp::neg: return neg(a);
  }
  throw std::invalid_argument("elementwise: unknown op");
}

// ---- matmul -----------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto da = dims2(a.shape());
  const auto db = dims2(b.shape());
  if (da.cols != db.rows) {
    throw ShapeError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  using Map = Eigen::Map<const RowMat<T>>;
  using MutMap = Eigen::Map<RowMat<T>>;
  // Products run on aligned copies. Eigen picks scalar or packet paths from the
  // buffer address, and heap addresses differ between otherwise identical runs.
  const RowMat<T> am = Map(a.values().data(), da.rows, da.cols);
  const RowMat<T> bm = Map(b.values().data(), db.rows, db.cols);
  const RowMat<T> prod = am * bm;
  std::vector<T> out(prod.data(), prod.data() + prod.size());
  check_finite<T>(out, "matmul");
  return Tensor<T>::make_result(
      Shape{da.rows, db.cols}, std::move(out), {a, b},
      [da, db](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        const RowMat<T> g = Map(self.grad.data(), da.rows, db.cols);
        if (wants_grad(parents, 0)) {
          const RowMat<T> bm = Map(parents[1].values().data(), db.rows, db.cols);
          const RowMat<T> ga = g * bm.transpose();
          MutMap(parent_grad(parents, 0).data(), da.rows, da.cols) += Map(ga.data(), da.rows, da.cols);
        }
        if (wants_grad(parents, 1)) {
          const RowMat<T> am = Map(parents[0].values().data(), da.rows, da.cols);
          const RowMat<T> gb = am.transpose() * g;
          MutMap(parent_grad(parents, 1).data(), db.rows, db.cols) += Map(gb.data(), db.rows, db.cols);
        }
      });
}

// ---- softmax / reductions ---------------------------------------------------

template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  const auto d = dims2(x.shape());
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < d.rows; ++r) {
    const T* in = xv.data() + r * d.cols;
    T* o = out.data() + r * d.cols;
    const T peak = *std::max_element(in, in + d.cols);
    T total = 0;
    for (std::size_t c = 0; c < d.cols; ++c) total += (o[c] = std::exp(in[c] - peak));
    for (std::size_t c = 0; c < d.cols; ++c) o[c] /= total;
  }
  check_finite<T>(out, "softmax");
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x}, [d](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        auto& gx = parent_grad(parents, 0);
        for (std::size_t r = 0; r < d.rows; ++r) {
          const T* y = self.value.data() + r * d.cols;
          const T* g = self.grad.data() + r * d.cols;
          T dot = 0;
          for (std::size_t c = 0; c < d.cols; ++c) dot += g[c] * y[c];
          for (std::size_t c = 0; c < d.cols; ++c) gx[r * d.cols + c] += y[c] * (g[c] - dot);
        }
      });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (const T v : x.values()) total += v;
  check_finite<T>(std::span<const T>(&total, 1), "sum");
  return Tensor<T>::make_result({}, {total}, {x},
                                [](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
                                  auto& gx = parent_grad(parents, 0);
                                  const T g = self.grad[0];
                                  for (auto& v : gx) v += g;
                                });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
Tensor<T> row_sum(const Tensor<T>& x) {
  const auto d = dims2(x.shape());
  const auto xv = x.values();
  std::vector<T> out(d.rows, T(0));
  for (std::size_t r = 0; r < d.rows; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < d.cols; ++c) s += xv[r * d.cols + c];
    out[r] = s;
  }
  check_finite<T>(out, "row_sum");
  return Tensor<T>::make_result(Shape{d.rows, 1}, std::move(out), {x},
                                [d](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
                                  auto& gx = parent_grad(parents, 0);
                                  for (std::size_t r = 0; r < d.rows; ++r) {
                                    for (std::size_t c = 0; c < d.cols; ++c) {
                                      gx[r * d.cols + c] += self.grad[r];
                                    }
                                  }
                                });
}

// ---- layout -----------------------------------------------------------------

template <class T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  std::vector<Tensor<T>> parents(parts.begin(), parts.end());
  return Tensor<T>::make_result(
      Shape{rows, total}, std::move(out), std::move(parents),
      [rows, total, widths](const detail::Node<T>& self, std::span<Tensor<T>> ps) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ps.size(); ++k) {
          if (wants_grad(ps, k)) {
            auto& g = parent_grad(ps, k);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < widths[k]; ++c) {
                g[r * widths[k] + c] += self.grad[r * total + off + c];
              }
            }
          }
          off += widths[k];
        }
      });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const auto d = dims2(x.shape());
  if (begin + count > d.cols) throw ShapeError("slice_cols out of range");
  const auto xv = x.values();
  std::vector<T> out(d.rows * count);
  for (std::size_t r = 0; r < d.rows; ++r) {
    std::copy_n(xv.data() + r * d.cols + begin, count, out.data() + r * count);
  }
  return Tensor<T>::make_result(
      Shape{d.rows, count}, std::move(out), {x},
      [d, begin, count](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        auto& gx = parent_grad(parents, 0);
        for (std::size_t r = 0; r < d.rows; ++r) {
          for (std::size_t c = 0; c < count; ++c) gx[r * d.cols + begin + c] += self.grad[r * count + c];
        }
      });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const auto d = dims2(x.shape());
  if (begin + count > d.rows) throw ShapeError("slice_rows out of range");
  const auto xv = x.values();
  std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * d.cols),
                     xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * d.cols));
  return Tensor<T>::make_result(
      Shape{count, d.cols}, std::move(out), {x},
      [d, begin](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        auto& gx = parent_grad(parents, 0);
        T* dst = gx.data() + begin * d.cols;
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
      });
}

template <class T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows column counts differ");
    rows += p.rows();
  }
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor<T>> parents(parts.begin(), parts.end());
  return Tensor<T>::make_result(Shape{rows, cols}, std::move(out), std::move(parents),
                                [](const detail::Node<T>& self, std::span<Tensor<T>> ps) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < ps.size(); ++k) {
                                    const std::size_t n = ps[k].numel();
                                    if (wants_grad(ps, k)) {
                                      auto& g = parent_grad(ps, k);
                                      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
                                    }
                                    off += n;
                                  }
                                });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  const auto xv = x.values();
  return Tensor<T>::make_result(std::move(shape), std::vector<T>(xv.begin(), xv.end()), {x},
                                [](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
                                  auto& gx = parent_grad(parents, 0);
                                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                                });
}

// ---- instantiation ----------------------------------------------------------

#define FREBIS_INSTANTIATE(T)                                                                \
  template class Tensor<T>;                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> elementwise(ElementwiseOp, std::span<const Tensor<T>>, T);              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> softplus(const Tensor<T>&, T);                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> exp(const Tensor<T>&);                                                  \
  template Tensor<T> sqrt(const Tensor<T>&);                                                 \
  template Tensor<T> square(const Tensor<T>&);                                               \
  template Tensor<T> abs(const Tensor<T>&);                                                  \
  template Tensor<T> neg(const Tensor<T>&);                                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                         \
  template Tensor<T> softmax(const Tensor<T>&);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> row_sum(const Tensor<T>&);                                              \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                                \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

FREBIS_INSTANTIATE(float)
FREBIS_INSTANTIATE(double)

#undef FREBIS_INSTANTIATE

}  // namespace frebis
