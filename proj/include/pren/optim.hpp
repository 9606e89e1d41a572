#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pren/tensor.hpp"

namespace pren {

// SGD with momentum and decoupled-from-nothing classic weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
template <class S>
struct OptimState {
  S learning_rate{};
  S momentum{};
  S weight_decay{};
  std::map<std::string, std::vector<S>> velocity;

  OptimState() = default;
  OptimState(const ParamSet<S>& params, S lr, S mom, S wd)
      : learning_rate(lr), momentum(mom), weight_decay(wd) {
    for (const auto& [name, t] : params)
      velocity.emplace(name, std::vector<S>(t.data.size(), S(0)));
  }
};

template <class S>
void sgd_momentum_step(ParamSet<S>& params, OptimState<S>& state) {
  for (auto& [name, p] : params) {
    if (!p.has_grad())
      throw std::runtime_error("sgd_momentum_step: parameter '" + name +
                               "' has no gradient");
    auto it = state.velocity.find(name);
    if (it == state.velocity.end() || it->second.size() != p.data.size())
      throw std::runtime_error("sgd_momentum_step: velocity buffer for '" +
                               name + "' missing or mis-sized");
    std::vector<S>& v = it->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      v[i] = state.momentum * v[i] + p.grad[i] + state.weight_decay * p.data[i];
      p.data[i] -= state.learning_rate * v[i];
    }
    p.zero_grad();
  }
}

}  // namespace pren
