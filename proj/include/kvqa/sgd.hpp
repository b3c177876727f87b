#pragma once

#include <span>

namespace kvqa {

// Classic momentum update: v <- mu*v - lr*g; p <- p + v.
inline void sgd_momentum_step(std::span<double> params,
                              std::span<const double> grads,
                              std::span<double> velocity, double lr,
                              double mu) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] - lr * grads[i];
    params[i] += velocity[i];
  }
}

}  // namespace kvqa
