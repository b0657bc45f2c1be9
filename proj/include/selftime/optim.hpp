#pragma once

#include <cstdint>
#include <vector>

#include "selftime/tensor.hpp"

namespace selftime::nn {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Real>
struct AdamState {
  std::int64_t step_count = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
  AdamOptions options;
};

template <class Real>
AdamState<Real> make_adam_state(const std::vector<BasicTensor<Real>>& params, const AdamOptions& options);

// One bias-corrected Adam update using each parameter's accumulated grad.
// Parameters without a grad are treated as having a zero gradient.
template <class Real>
void adam_step(std::vector<BasicTensor<Real>>& params, AdamState<Real>& state);

template <class Real>
class Adam {
 public:
  Adam(std::vector<BasicTensor<Real>> params, const AdamOptions& options)
      : params_(std::move(params)), state_(make_adam_state(params_, options)) {}

  void step() { adam_step(params_, state_); }
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  AdamState<Real>& state() { return state_; }
  const AdamState<Real>& state() const { return state_; }
  const std::vector<BasicTensor<Real>>& params() const { return params_; }

 private:
  std::vector<BasicTensor<Real>> params_;
  AdamState<Real> state_;
};

}  // namespace selftime::nn
