#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// Tensors are rank <= 2 row-major arrays. A rank-1 tensor of length n is
// treated as a 1 x n row and a scalar as 1 x 1 wherever an operation needs
// rows and columns. Every operation returns a new tensor; when any input
// requires a gradient (and recording is enabled on the calling thread) the
// result remembers its parents and a backward closure. Calling backward() on a
// scalar walks that record in reverse topological order once.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace frebis {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

/// Handle to a node of the computation record. Copies share the node.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::Node<T>;
  /// Receives the result node (its grad is populated) and the parent handles.
  using BackwardFn = std::function<void(const Node& out, std::span<Tensor> parents)>;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);
  static Tensor from(Shape shape, std::vector<T> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows);
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<T> values);

  /// Builds the result of a custom differentiable operation. The closure is
  /// kept only when some parent requires a gradient and recording is on.
  static Tensor make_result(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                            BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const;
  /// Direct write access; meant for leaves (optimizer updates, initialization).
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient values, or an empty span when nothing has been accumulated.
  std::span<const T> grad() const;
  /// Allocates (zero-filled) on first use.
  std::span<T> grad_buffer();
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and propagates. Requires a single element.
  void backward() const;

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// While alive, operations on this thread do not record history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// ---- operations -----------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

enum class ElementwiseOp { add, sub, mul, div, softplus, relu, sigmoid, exp, sqrt, square, abs, neg };

/// Tag-dispatched pointwise operation. Unary tags take one input, binary tags
/// two; `sharpness` is used by softplus only.
template <class T>
Tensor<T> elementwise(ElementwiseOp op, std::span<const Tensor<T>> inputs, T sharpness = T(100));

// Binary ops broadcast rank-2 operands numpy-style (a dimension of size 1
// stretches to match).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

/// ln(1 + exp(s x)) / s
template <class T>
Tensor<T> softplus(const Tensor<T>& x, T sharpness);
template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <class T>
Tensor<T> exp(const Tensor<T>& x);
template <class T>
Tensor<T> sqrt(const Tensor<T>& x);
template <class T>
Tensor<T> square(const Tensor<T>& x);
template <class T>
Tensor<T> abs(const Tensor<T>& x);
template <class T>
Tensor<T> neg(const Tensor<T>& x);
template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
/// max(x, floor); gradient passes where x > floor.
template <class T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor);

/// Row-wise softmax (a rank-1 tensor is a single row). Uses max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x);

/// Sum of every element, as a scalar.
template <class T>
Tensor<T> sum(const Tensor<T>& x);
template <class T>
Tensor<T> mean(const Tensor<T>& x);
/// m x n -> m x 1
template <class T>
Tensor<T> row_sum(const Tensor<T>& x);

template <class T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count);
template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count);
/// Stacks rank-2 tensors with equal column counts vertically.
template <class T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

}  // namespace frebis
