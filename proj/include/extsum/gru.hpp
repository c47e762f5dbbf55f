#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "extsum/tensor.hpp"

namespace extsum {

// Reset, update and new gate parameters of one GRU direction. Input weights
// are stored (d_hid x d_in) so that a gate pre-activation is W x + U h + b.
struct GruParams {
  Tensor w_reset, w_update, w_new;  // d_hid x d_in
  Tensor u_reset, u_update, u_new;  // d_hid x d_hid
  Tensor b_reset, b_update, b_new;  // d_hid

  std::size_t input_dim() const { return w_reset.cols(); }
  std::size_t hidden_dim() const { return w_reset.rows(); }

  // Weights uniform in [-1/sqrt(d_hid), 1/sqrt(d_hid)], biases zero.
  static GruParams init(std::size_t d_in, std::size_t d_hid, Rng& rng);
  static GruParams zeros(std::size_t d_in, std::size_t d_hid);

  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

// r = sigmoid(W_r x + U_r h + b_r)
// z = sigmoid(W_z x + U_z h + b_z)
// n = tanh(W_n x + U_n (r * h) + b_n)
// h' = (1 - z) * n + z * h
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& params);

struct BiGruStates {
  std::vector<Tensor> forward;   // forward[t] has seen inputs 0..t
  std::vector<Tensor> backward;  // backward[t] has seen inputs t..n-1
};

// Both directions start from the zero state; outputs are in input order.
BiGruStates run_bigru(std::span<const Tensor> inputs, const GruParams& fwd, const GruParams& bwd);

}  // namespace extsum
