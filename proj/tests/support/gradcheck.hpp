#pragma once

// Central finite-difference oracle for 64-bit graphs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "selftime/functional.hpp"
#include "selftime/tensor.hpp"

namespace selftime::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a| + |n|, floor). The floor keeps entries whose true
// gradient is ~0 from turning round-off into a large ratio.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

// `loss` rebuilds the scalar from the current values of `params`. Each
// parameter needs requires_grad. When `max_per_tensor` is nonzero only that
// many randomly chosen entries per tensor are probed.
inline GradCheckResult gradcheck(const std::function<nn::Tensor64()>& loss, std::vector<nn::Tensor64> params,
                                 double step = 1e-5, std::size_t max_per_tensor = 0, unsigned seed = 7) {
  for (auto& p : params) p.zero_grad();
  nn::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }
  GradCheckResult out;
  std::mt19937 gen(seed);
  nn::NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].data();
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_tensor && idx.size() > max_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), gen);
      idx.resize(max_per_tensor);
    }
    for (auto i : idx) {
      const double orig = data[i];
      data[i] = orig + step;
      const double up = loss().item();
      data[i] = orig - step;
      const double down = loss().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[k][i], numeric));
      ++out.checked;
    }
  }
  return out;
}

inline nn::Tensor64 random_tensor(nn::Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0,
                                  bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = dist(gen);
  return nn::Tensor64(std::move(shape), std::move(v), requires_grad);
}

// sum(w * x) with fixed random weights w, so every output element matters.
inline nn::Tensor64 weighted_sum(const nn::Tensor64& x, const std::vector<double>& w) {
  return nn::sum(nn::mul(x, nn::Tensor64(x.shape(), w)));
}

inline std::vector<double> random_weights(std::size_t n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = dist(gen);
  return w;
}

}  // namespace selftime::testing
