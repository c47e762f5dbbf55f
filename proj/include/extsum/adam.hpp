#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "extsum/tensor.hpp"

namespace extsum {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
};

// One bias-corrected Adam update over `params` using their accumulated
// gradients, which are zeroed afterwards. Moments are allocated on first use
// and must keep the same parameter order on later calls.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace extsum
