#include "extsum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace extsum {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    std::ostringstream os;
    os << op << ": size mismatch " << shape_string(a.shape()) << " vs " << shape_string(b.shape());
    throw std::invalid_argument(os.str());
  }
}

// Gradient buffer of an input, or nullptr if it does not need one.
Real* grad_of(const std::shared_ptr<detail::Node>& n) {
  return n->requires_grad ? n->grad.data() : nullptr;
}

Real softplus(Real x) {
  // log(1 + exp(x)) without overflow
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Real stable_sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<Real> v(shape_size(shape), Real(0));
  return from(std::move(v), std::move(shape), requires_grad);
}

Tensor Tensor::from(std::vector<Real> values, Shape shape, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), Real(0));
  return Tensor(std::move(node));
}

Tensor Tensor::vector(std::vector<Real> values, bool requires_grad) {
  Shape s{values.size()};
  return from(std::move(values), std::move(s), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from({value}, {1}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
std::size_t Tensor::cols() const { return node_->shape.size() < 2 ? 1 : node_->shape[1]; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::span<Real> Tensor::values() { return node_->value; }
std::span<const Real> Tensor::values() const { return node_->value; }
std::span<Real> Tensor::grad() { return node_->grad; }
std::span<const Real> Tensor::grad() const { return node_->grad; }

Real Tensor::item() const {
  require(size() == 1, "Tensor::item on a non-scalar tensor");
  return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), Real(0)); }

Tensor Tensor::clone(bool requires_grad) const {
  return from(node_->value, node_->shape, requires_grad);
}

void Tensor::backward() {
  require(size() == 1, "backward() requires a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; parents come before children in `order`.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward();
  }
}

Tensor make_result(Shape shape, std::vector<Real> values, std::vector<Tensor> inputs) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    node->grad.assign(node->value.size(), Real(0));
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.shared());
  }
  return Tensor(std::move(node));
}

// ---- ops -------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor r = make_result(a.shape(), std::move(out), {a, b});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared(), bn = b.shared();
    rn->backward = [rn, an, bn] {
      Real* ga = grad_of(an);
      Real* gb = grad_of(bn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        if (ga) ga[i] += rn->grad[i];
        if (gb) gb[i] += rn->grad[i];
      }
    };
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor r = make_result(a.shape(), std::move(out), {a, b});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared(), bn = b.shared();
    rn->backward = [rn, an, bn] {
      Real* ga = grad_of(an);
      Real* gb = grad_of(bn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        if (ga) ga[i] += rn->grad[i];
        if (gb) gb[i] -= rn->grad[i];
      }
    };
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "mul");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor r = make_result(a.shape(), std::move(out), {a, b});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared(), bn = b.shared();
    rn->backward = [rn, an, bn] {
      Real* ga = grad_of(an);
      Real* gb = grad_of(bn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        if (ga) ga[i] += rn->grad[i] * bn->value[i];
        if (gb) gb[i] += rn->grad[i] * an->value[i];
      }
    };
  }
  return r;
}

Tensor interpolate(const Tensor& gate, const Tensor& a, const Tensor& b) {
  require_same_size(gate, a, "interpolate");
  require_same_size(gate, b, "interpolate");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (Real(1) - gate[i]) * a[i] + gate[i] * b[i];
  Tensor r = make_result(a.shape(), std::move(out), {gate, a, b});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto gn = gate.shared(), an = a.shared(), bn = b.shared();
    rn->backward = [rn, gn, an, bn] {
      Real* gg = grad_of(gn);
      Real* ga = grad_of(an);
      Real* gb = grad_of(bn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        const Real g = rn->grad[i];
        if (gg) gg[i] += g * (bn->value[i] - an->value[i]);
        if (ga) ga[i] += g * (Real(1) - gn->value[i]);
        if (gb) gb[i] += g * gn->value[i];
      }
    };
  }
  return r;
}

Tensor scale(const Tensor& a, const Tensor& s) {
  require(s.size() == 1, "scale: factor must be a scalar");
  const Real f = s[0];
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * f;
  Tensor r = make_result(a.shape(), std::move(out), {a, s});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared(), sn = s.shared();
    rn->backward = [rn, an, sn] {
      Real* ga = grad_of(an);
      Real* gs = grad_of(sn);
      Real acc = 0;
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        if (ga) ga[i] += rn->grad[i] * sn->value[0];
        acc += rn->grad[i] * an->value[i];
      }
      if (gs) gs[0] += acc;
    };
  }
  return r;
}

Tensor scale_by(const Tensor& a, Real factor) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  Tensor r = make_result(a.shape(), std::move(out), {a});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared();
    rn->backward = [rn, an, factor] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i] * factor;
    };
  }
  return r;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.shape().size() != 2 || w.cols() != x.size()) {
    throw std::invalid_argument("matvec: cannot multiply " + shape_string(w.shape()) + " by " +
                                shape_string(x.shape()));
  }
  const std::size_t m = w.rows(), n = w.cols();
  const Real* wv = w.values().data();
  const Real* xv = x.values().data();
  std::vector<Real> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    Real acc = 0;
    const Real* row = wv + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    out[i] = acc;
  }
  Tensor r = make_result({m}, std::move(out), {w, x});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto wn = w.shared(), xn = x.shared();
    rn->backward = [rn, wn, xn, m, n] {
      Real* gw = grad_of(wn);
      Real* gx = grad_of(xn);
      for (std::size_t i = 0; i < m; ++i) {
        const Real g = rn->grad[i];
        if (g == Real(0)) continue;
        const Real* row = wn->value.data() + i * n;
        if (gw) {
          Real* grow = gw + i * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += g * xn->value[j];
        }
        if (gx) {
          for (std::size_t j = 0; j < n; ++j) gx[j] += g * row[j];
        }
      }
    };
  }
  return r;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "dot");
  Real acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  Tensor r = make_result({1}, {acc}, {a, b});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared(), bn = b.shared();
    rn->backward = [rn, an, bn] {
      Real* ga = grad_of(an);
      Real* gb = grad_of(bn);
      const Real g = rn->grad[0];
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        if (ga) ga[i] += g * bn->value[i];
        if (gb) gb[i] += g * an->value[i];
      }
    };
  }
  return r;
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require(a.size() == 1 && b.size() == 1, "divide: operands must be scalars");
  Tensor r = make_result({1}, {a[0] / b[0]}, {a, b});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared(), bn = b.shared();
    rn->backward = [rn, an, bn] {
      const Real g = rn->grad[0];
      const Real den = bn->value[0];
      if (Real* ga = grad_of(an)) ga[0] += g / den;
      if (Real* gb = grad_of(bn)) gb[0] -= g * an->value[0] / (den * den);
    };
  }
  return r;
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<Real> out;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  Tensor r = make_result({total}, std::move(out), inputs);
  if (r.requires_grad()) {
    auto* rn = r.node();
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.shared());
    rn->backward = [rn, nodes = std::move(nodes)] {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        if (Real* g = grad_of(n)) {
          for (std::size_t i = 0; i < n->value.size(); ++i) g[i] += rn->grad[off + i];
        }
        off += n->value.size();
      }
    };
  }
  return r;
}

Tensor slice(const Tensor& a, std::size_t offset, std::size_t length) {
  require(offset + length <= a.size(), "slice: out of range");
  std::vector<Real> out(a.values().begin() + offset, a.values().begin() + offset + length);
  Tensor r = make_result({length}, std::move(out), {a});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared();
    rn->backward = [rn, an, offset] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[offset + i] += rn->grad[i];
    };
  }
  return r;
}

namespace {

// Unary elementwise op whose derivative is expressed via the output value.
template <class Fwd, class DerivFromOut>
Tensor unary(const Tensor& a, Fwd fwd, DerivFromOut deriv) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i]);
  Tensor r = make_result(a.shape(), std::move(out), {a});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared();
    rn->backward = [rn, an, deriv] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i] * deriv(rn->value[i]);
    };
  }
  return r;
}

}  // namespace

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](Real x) { return std::tanh(x); }, [](Real y) { return Real(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](Real y) { return y * (Real(1) - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](Real x) { return x > 0 ? x : Real(0); }, [](Real y) { return y > 0 ? Real(1) : Real(0); });
}

Tensor sum(const Tensor& a) {
  Real acc = 0;
  for (auto v : a.values()) acc += v;
  Tensor r = make_result({1}, {acc}, {a});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto an = a.shared();
    rn->backward = [rn, an] {
      for (auto& g : an->grad) g += rn->grad[0];
    };
  }
  return r;
}

Tensor sum(std::span<const Tensor> scalars) {
  if (scalars.empty()) return Tensor::scalar(0);
  return sum(concat(scalars));
}

Tensor dropout(const Tensor& x, Real rate, bool training, Rng& rng) {
  require(rate >= 0 && rate < 1, "dropout: rate must be in [0, 1)");
  if (!training || rate == Real(0)) return x;
  const Real keep_scale = Real(1) / (Real(1) - rate);
  std::vector<Real> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? Real(0) : keep_scale;
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  Tensor r = make_result(x.shape(), std::move(out), {x});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto xn = x.shared();
    rn->backward = [rn, xn, mask = std::move(mask)] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) xn->grad[i] += rn->grad[i] * mask[i];
    };
  }
  return r;
}

Tensor weighted_bce_with_logits(const Tensor& logits, std::span<const int> labels, Real pos_weight) {
  if (logits.size() != labels.size()) {
    throw std::invalid_argument("weighted_bce_with_logits: " + std::to_string(logits.size()) +
                                " logits for " + std::to_string(labels.size()) + " labels");
  }
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
  Real loss = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Real z = logits[i];
    loss += labels[i] ? pos_weight * softplus(-z) : softplus(z);
  }
  Tensor r = make_result({1}, {loss}, {logits});
  if (r.requires_grad()) {
    auto* rn = r.node();
    auto ln = logits.shared();
    std::vector<int> y(labels.begin(), labels.end());
    rn->backward = [rn, ln, y = std::move(y), pos_weight] {
      const Real g = rn->grad[0];
      for (std::size_t i = 0; i < y.size(); ++i) {
        const Real p = stable_sigmoid(ln->value[i]);
        ln->grad[i] += g * (y[i] ? pos_weight * (p - Real(1)) : p);
      }
    };
  }
  return r;
}

}  // namespace extsum
