#pragma once

#include "otbayes/diffnet/network.hpp"

#include <utility>

namespace otbayes::diffnet {

enum class Direction { descend, ascend };

struct AdamState {
  std::size_t step = 0;
  Vector first_moment;
  Vector second_moment;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                            double eps = 1e-8);
};

/// In-place Adam update with bias correction. `ascend` follows +grad.
/// Throws std::invalid_argument on a non-finite gradient or length mismatch.
void adam_update(Vector& values, const Vector& grad, AdamState& state, Direction direction);

std::pair<NetworkParams, AdamState> adam_step(const NetworkParams& params, const Vector& grad,
                                              const AdamState& state, Direction direction);

}  // namespace otbayes::diffnet
