#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "selftime/tensor.hpp"

namespace selftime::nn {

// Elementwise / reduction helpers. Shapes must match exactly (no broadcasting).
template <class Real> BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <class Real> BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <class Real> BasicTensor<Real> scale(const BasicTensor<Real>& a, Real factor);
template <class Real> BasicTensor<Real> sum(const BasicTensor<Real>& a);
template <class Real> BasicTensor<Real> mean(const BasicTensor<Real>& a);
template <class Real> BasicTensor<Real> reshape(const BasicTensor<Real>& a, Shape shape);

// input [B,Cin,T], weight [Cout,Cin,K], bias [Cout] (may be undefined).
// Output [B,Cout,floor((T + 2*padding - K)/stride) + 1].
template <class Real>
BasicTensor<Real> conv1d(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias, std::size_t stride, std::size_t padding);

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

// input [B,C,T] or [B,C]; statistics are per channel C. In training mode the
// running buffers are updated in place (unbiased variance, as the usual
// frameworks do); in eval mode they are read.
template <class Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& input, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BasicTensor<Real>& running_mean,
                             BasicTensor<Real>& running_var, bool training,
                             const BatchNormOptions& options = {});

template <class Real> BasicTensor<Real> relu(const BasicTensor<Real>& x);
template <class Real> BasicTensor<Real> leaky_relu(const BasicTensor<Real>& x, Real slope = Real(0.01));
template <class Real> BasicTensor<Real> sigmoid(const BasicTensor<Real>& x);
// Over the last axis.
template <class Real> BasicTensor<Real> softmax(const BasicTensor<Real>& x);

enum class Activation { relu, leaky_relu, sigmoid, softmax };
template <class Real>
BasicTensor<Real> activation(const BasicTensor<Real>& x, Activation kind, Real slope = Real(0.01));

// [B,C,T] -> [B,C]
template <class Real> BasicTensor<Real> global_avg_pool(const BasicTensor<Real>& x);

// Row-wise x / max(||x||_2, epsilon) for [B,F].
template <class Real> BasicTensor<Real> l2_normalize(const BasicTensor<Real>& x, Real epsilon = Real(1e-12));

// input [B,Fin], weight [Fout,Fin], bias [Fout] or undefined. Output input * W^T + b.
template <class Real>
BasicTensor<Real> linear(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias);

// [B,Fa] ++ [B,Fb] -> [B,Fa+Fb]
template <class Real>
BasicTensor<Real> concat_columns(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

// Columns [begin, end) of a rank-2 tensor.
template <class Real>
BasicTensor<Real> slice_columns(const BasicTensor<Real>& x, std::size_t begin, std::size_t end);

// out[m] = x[index[m]] for rank-2 x.
template <class Real>
BasicTensor<Real> gather_rows(const BasicTensor<Real>& x, std::span<const std::uint32_t> index);

// out[m] = a[index_a[m]] + b[index_b[m]]; fused form of gather + add.
template <class Real>
BasicTensor<Real> gather_add(const BasicTensor<Real>& a, std::span<const std::uint32_t> index_a,
                             const BasicTensor<Real>& b, std::span<const std::uint32_t> index_b);

// Probabilities are clamped to [1e-7, 1 - 1e-7]; mean over all elements.
template <class Real>
BasicTensor<Real> bce_loss(const BasicTensor<Real>& scores, std::span<const Real> labels);

// Same loss on logits, evaluated in the overflow-free form.
template <class Real>
BasicTensor<Real> bce_with_logits(const BasicTensor<Real>& logits, std::span<const Real> labels);

// logits [B,C]; mean over B of -log softmax(logits)[label].
template <class Real>
BasicTensor<Real> ce_loss(const BasicTensor<Real>& logits, std::span<const int> labels);

}  // namespace selftime::nn
