#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap shared handle onto a node of the computation record.
// Every primitive below allocates a fresh node holding its value and a
// closure that propagates the output gradient to its parents. Calling
// backward() on a scalar walks the record in reverse topological order.
// Gradients of leaf tensors accumulate across backward passes until
// zero_grad(); gradients of intermediate nodes are recomputed per pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ovtal {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  // Direct mutation is only legal on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode pass from this scalar; seeds d(self)/d(self) = 1.
  void backward() const;

  // New leaf sharing no storage with this tensor.
  Tensor clone() const;
  // Leaf view of the value, cut from the record.
  Tensor detach() const;

  // For primitive authors.
  static Tensor record(Shape shape, std::vector<double> value,
                       std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward);
  detail::Node& node() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// While alive, primitives on this thread record no backward rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- primitives ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);

// x: [N, K], w: [K, M], b: [M] (may be undefined) -> [N, M]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// Temporal convolution over a [S, Cin] sequence.
// w: [Cout, Cin, K], b: [Cout] (may be undefined) -> [S_out, Cout] with
// S_out = (S + 2*padding - K) / stride + 1. Zero padding.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride = 1, std::size_t padding = 0);

// Normalizes each row of a [N, C] tensor over C, then applies gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// softmax(x / temperature) along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis, double temperature = 1.0);

// [S, C] -> [ceil(S/2), C]; row i is the max of rows 2i and 2i+1.
Tensor downsample_max2(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Concatenates along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);

}  // namespace ovtal
