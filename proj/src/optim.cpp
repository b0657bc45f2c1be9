#include "selftime/optim.hpp"

#include <cmath>
#include <string>

#include "selftime/errors.hpp"

namespace selftime::nn {

template <class Real>
AdamState<Real> make_adam_state(const std::vector<BasicTensor<Real>>& params, const AdamOptions& options) {
  AdamState<Real> state;
  state.options = options;
  for (const auto& p : params) {
    state.m.emplace_back(p.numel(), Real(0));
    state.v.emplace_back(p.numel(), Real(0));
  }
  return state;
}

template <class Real>
void adam_step(std::vector<BasicTensor<Real>>& params, AdamState<Real>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw InvalidArgument("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                          " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.m[k].size() != params[k].numel() || state.v[k].size() != params[k].numel()) {
      throw InvalidArgument("adam_step: state shape mismatch for parameter " + std::to_string(k));
    }
  }
  const auto& opt = state.options;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);
  const double step_size = opt.lr / correction1;
  const double sqrt_c2 = std::sqrt(correction2);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto data = p.data();
    auto grad = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double denom = std::sqrt(vi) / sqrt_c2 + opt.epsilon;
      data[i] = static_cast<Real>(data[i] - step_size * mi / denom);
    }
  }
}

template AdamState<float> make_adam_state(const std::vector<BasicTensor<float>>&, const AdamOptions&);
template AdamState<double> make_adam_state(const std::vector<BasicTensor<double>>&, const AdamOptions&);
template void adam_step(std::vector<BasicTensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<BasicTensor<double>>&, AdamState<double>&);

}  // namespace selftime::nn
