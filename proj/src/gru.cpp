#include "extsum/gru.hpp"

#include <cmath>
#include <stdexcept>

namespace extsum {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, Real bound, Rng& rng) {
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor::from(std::move(v), {rows, cols}, true);
}

}  // namespace

GruParams GruParams::init(std::size_t d_in, std::size_t d_hid, Rng& rng) {
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(d_hid));
  GruParams p;
  p.w_reset = uniform_matrix(d_hid, d_in, bound, rng);
  p.w_update = uniform_matrix(d_hid, d_in, bound, rng);
  p.w_new = uniform_matrix(d_hid, d_in, bound, rng);
  p.u_reset = uniform_matrix(d_hid, d_hid, bound, rng);
  p.u_update = uniform_matrix(d_hid, d_hid, bound, rng);
  p.u_new = uniform_matrix(d_hid, d_hid, bound, rng);
  p.b_reset = Tensor::zeros({d_hid}, true);
  p.b_update = Tensor::zeros({d_hid}, true);
  p.b_new = Tensor::zeros({d_hid}, true);
  return p;
}

GruParams GruParams::zeros(std::size_t d_in, std::size_t d_hid) {
  GruParams p;
  p.w_reset = Tensor::zeros({d_hid, d_in}, true);
  p.w_update = Tensor::zeros({d_hid, d_in}, true);
  p.w_new = Tensor::zeros({d_hid, d_in}, true);
  p.u_reset = Tensor::zeros({d_hid, d_hid}, true);
  p.u_update = Tensor::zeros({d_hid, d_hid}, true);
  p.u_new = Tensor::zeros({d_hid, d_hid}, true);
  p.b_reset = Tensor::zeros({d_hid}, true);
  p.b_update = Tensor::zeros({d_hid}, true);
  p.b_new = Tensor::zeros({d_hid}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> GruParams::named(const std::string& prefix) const {
  return {
      {prefix + ".w_reset", w_reset},   {prefix + ".w_update", w_update}, {prefix + ".w_new", w_new},
      {prefix + ".u_reset", u_reset},   {prefix + ".u_update", u_update}, {prefix + ".u_new", u_new},
      {prefix + ".b_reset", b_reset},   {prefix + ".b_update", b_update}, {prefix + ".b_new", b_new},
  };
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  if (x.size() != p.input_dim() || h_prev.size() != p.hidden_dim()) {
    throw std::invalid_argument("gru_cell: input " + shape_string(x.shape()) + " / state " +
                                shape_string(h_prev.shape()) + " do not match parameters " +
                                shape_string(p.w_reset.shape()));
  }
  Tensor r = sigmoid(add(add(matvec(p.w_reset, x), matvec(p.u_reset, h_prev)), p.b_reset));
  Tensor z = sigmoid(add(add(matvec(p.w_update, x), matvec(p.u_update, h_prev)), p.b_update));
  Tensor n = tanh(add(add(matvec(p.w_new, x), matvec(p.u_new, mul(r, h_prev))), p.b_new));
  return interpolate(z, n, h_prev);
}

BiGruStates run_bigru(std::span<const Tensor> inputs, const GruParams& fwd, const GruParams& bwd) {
  const std::size_t n = inputs.size();
  if (n == 0) throw std::invalid_argument("run_bigru: empty input sequence");
  BiGruStates out;
  out.forward.resize(n);
  out.backward.resize(n);
  Tensor h = Tensor::zeros({fwd.hidden_dim()});
  for (std::size_t t = 0; t < n; ++t) {
    h = gru_cell(inputs[t], h, fwd);
    out.forward[t] = h;
  }
  h = Tensor::zeros({bwd.hidden_dim()});
  for (std::size_t t = n; t-- > 0;) {
    h = gru_cell(inputs[t], h, bwd);
    out.backward[t] = h;
  }
  return out;
}

}  // namespace extsum
