#include "otbayes/diffnet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace otbayes::diffnet {

AdamState AdamState::for_size(Eigen::Index n, double lr, double beta1, double beta2, double eps) {
  AdamState s;
  s.first_moment = Vector::Zero(n);
  s.second_moment = Vector::Zero(n);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_update(Vector& values, const Vector& grad, AdamState& state, Direction direction) {
  if (grad.size() != values.size() || state.first_moment.size() != values.size() ||
      state.second_moment.size() != values.size()) {
    throw std::invalid_argument("adam: parameter, gradient and moment lengths must match");
  }
  if (!(state.beta1 > 0.0 && state.beta1 < 1.0 && state.beta2 > 0.0 && state.beta2 < 1.0)) {
    throw std::invalid_argument("adam: betas must lie in (0, 1)");
  }
  if (!grad.allFinite()) throw std::invalid_argument("adam: non-finite gradient entry");

  const double sign = direction == Direction::ascend ? -1.0 : 1.0;
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * sign * grad;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  values.array() -= state.lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.eps);
}

std::pair<NetworkParams, AdamState> adam_step(const NetworkParams& params, const Vector& grad,
                                              const AdamState& state, Direction direction) {
  NetworkParams next = params;
  AdamState s = state;
  adam_update(next.values, grad, s, direction);
  return {std::move(next), std::move(s)};
}

}  // namespace otbayes::diffnet
