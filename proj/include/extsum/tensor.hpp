#pragma once

// Minimal reverse-mode differentiable tensors.
//
// A Tensor is a cheap handle onto a shared node. Operations build a graph of
// nodes; calling backward() on a scalar result walks the graph in reverse
// topological order and accumulates into the `grad` buffer of every node that
// requires gradients. Leaf parameters keep their gradients across graphs until
// zero_grad() or an optimizer step clears them, which is how per-batch
// accumulation works.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace extsum {

#if defined(EXTSUM_FLOAT32)
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty unless requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(std::vector<Real> values, Shape shape, bool requires_grad = false);
  static Tensor vector(std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const;

  std::span<Real> values();
  std::span<const Real> values() const;
  std::span<Real> grad();
  std::span<const Real> grad() const;
  Real item() const;
  Real operator[](std::size_t i) const { return values()[i]; }

  void zero_grad();
  // Seeds d(self)/d(self) = 1 and propagates. Only valid on a single-element tensor.
  void backward();

  // Deep copy of values; the copy is a fresh leaf.
  Tensor clone(bool requires_grad) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<Real>, std::vector<Tensor>);
};

// Builds an op output whose parents are `inputs`. The output requires grad iff
// any input does and gradient recording is enabled on this thread.
Tensor make_result(Shape shape, std::vector<Real> values, std::vector<Tensor> inputs);

// Disables graph construction on the current thread for its lifetime.
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

// Deterministic uniform stream used for dropout masks and initialization.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// ---- operations ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Elementwise (1 - gate) * a + gate * b.
Tensor interpolate(const Tensor& gate, const Tensor& a, const Tensor& b);
// a scaled by the single element of s.
Tensor scale(const Tensor& a, const Tensor& s);
// Matrix (rows x cols) times vector (cols) -> vector (rows).
Tensor matvec(const Tensor& w, const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
// Scalar division a / b, both single-element.
Tensor divide(const Tensor& a, const Tensor& b);
Tensor concat(std::initializer_list<Tensor> parts);
Tensor concat(std::span<const Tensor> parts);
Tensor slice(const Tensor& a, std::size_t offset, std::size_t length);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor sum(std::span<const Tensor> scalars);
Tensor scale_by(const Tensor& a, Real factor);
// Inverted dropout: survivors are scaled by 1/(1-rate). Identity when not
// training or rate == 0.
Tensor dropout(const Tensor& x, Real rate, bool training, Rng& rng);
// Sum over i of -[pos_weight * y_i * log sigmoid(z_i) + (1 - y_i) * log(1 - sigmoid(z_i))],
// evaluated stably on the logits z.
Tensor weighted_bce_with_logits(const Tensor& logits, std::span<const int> labels, Real pos_weight);

}  // namespace extsum
