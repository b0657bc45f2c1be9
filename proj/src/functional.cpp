#include "selftime/functional.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "selftime/errors.hpp"

namespace selftime::nn {

namespace {

template <class Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MatMap = Eigen::Map<RowMatrix<Real>>;
template <class Real>
using ConstMatMap = Eigen::Map<const RowMatrix<Real>>;

template <class Real>
using NodePtr = std::shared_ptr<detail::Node<Real>>;

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

template <class Real>
void require_rank(const BasicTensor<Real>& t, std::size_t rank, const char* op) {
  require(t.defined(), std::string(op) + ": undefined tensor");
  require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_string(t.shape()));
}

template <class Real>
bool wants_grad(const NodePtr<Real>& n) {
  return n && n->requires_grad;
}

}  // namespace

template <class Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result<Real>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<Real>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Real* g = in->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result<Real>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<Real>& self) {
    auto& lhs = self.inputs[0];
    auto& rhs = self.inputs[1];
    // Read both operands before writing, x*x shares one node.
    std::vector<Real> ga(self.grad.size()), gb(self.grad.size());
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] = self.grad[i] * rhs->data[i];
      gb[i] = self.grad[i] * lhs->data[i];
    }
    if (lhs->requires_grad) {
      Real* g = lhs->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) g[i] += ga[i];
    }
    if (rhs->requires_grad) {
      Real* g = rhs->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) g[i] += gb[i];
    }
  });
}

template <class Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real factor) {
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return detail::make_result<Real>(a.shape(), std::move(out), {a.node()}, [factor](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <class Real>
BasicTensor<Real> sum(const BasicTensor<Real>& a) {
  double acc = 0.0;
  for (Real v : a.data()) acc += v;
  return detail::make_result<Real>(Shape{}, {static_cast<Real>(acc)}, {a.node()}, [](detail::Node<Real>& self) {
    auto& in = self.inputs[0];
    Real* g = in->grad_buffer();
    for (std::size_t i = 0; i < in->data.size(); ++i) g[i] += self.grad[0];
  });
}

template <class Real>
BasicTensor<Real> mean(const BasicTensor<Real>& a) {
  require(a.numel() > 0, "mean: empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(a.numel()));
}

template <class Real>
BasicTensor<Real> reshape(const BasicTensor<Real>& a, Shape shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  std::vector<Real> out(a.data().begin(), a.data().end());
  return detail::make_result<Real>(std::move(shape), std::move(out), {a.node()}, [](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

// im2col layout: col[(c*K + k), b*Tout + t] = x[b, c, t*stride + k - padding]
template <class Real>
BasicTensor<Real> conv1d(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv1d");
  require_rank(weight, 3, "conv1d");
  const std::size_t batch = input.dim(0), cin = input.dim(1), len = input.dim(2);
  const std::size_t cout = weight.dim(0), ksize = weight.dim(2);
  require(weight.dim(1) == cin, "conv1d: input has " + std::to_string(cin) + " channels but weight expects " +
                                    std::to_string(weight.dim(1)));
  require(stride >= 1, "conv1d: stride must be >= 1");
  require(len + 2 * padding >= ksize, "conv1d: input length " + std::to_string(len) + " too short for kernel " +
                                          std::to_string(ksize) + " with padding " + std::to_string(padding));
  if (bias.defined()) require(bias.numel() == cout, "conv1d: bias size does not match out_channels");

  const std::size_t tout = (len + 2 * padding - ksize) / stride + 1;
  const std::size_t rows = cin * ksize, cols = batch * tout;
  auto col = std::make_shared<std::vector<Real>>(rows * cols, Real(0));
  const Real* x = input.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < cin; ++c) {
      const Real* xrow = x + (b * cin + c) * len;
      for (std::size_t k = 0; k < ksize; ++k) {
        Real* dst = col->data() + (c * ksize + k) * cols + b * tout;
        for (std::size_t t = 0; t < tout; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[t] = xrow[pos];
        }
      }
    }
  }

  RowMatrix<Real> prod(cout, cols);
  prod.noalias() = ConstMatMap<Real>(weight.data().data(), cout, rows) * ConstMatMap<Real>(col->data(), rows, cols);

  std::vector<Real> out(batch * cout * tout);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      const Real bo = bias.defined() ? bias.data()[o] : Real(0);
      Real* dst = out.data() + (b * cout + o) * tout;
      for (std::size_t t = 0; t < tout; ++t) dst[t] = prod(o, b * tout + t) + bo;
    }
  }

  std::vector<NodePtr<Real>> inputs{input.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  const bool has_bias = bias.defined();
  return detail::make_result<Real>(
      Shape{batch, cout, tout}, std::move(out), std::move(inputs),
      [=](detail::Node<Real>& self) {
        RowMatrix<Real> dprod(cout, cols);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t t = 0; t < tout; ++t) dprod(o, b * tout + t) = self.grad[(b * cout + o) * tout + t];

        auto& in = self.inputs[0];
        auto& w = self.inputs[1];
        if (w->requires_grad) {
          MatMap<Real>(w->grad_buffer(), cout, rows).noalias() +=
              dprod * ConstMatMap<Real>(col->data(), rows, cols).transpose();
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          Real* gb = self.inputs[2]->grad_buffer();
          for (std::size_t o = 0; o < cout; ++o) gb[o] += dprod.row(o).sum();
        }
        if (in->requires_grad) {
          RowMatrix<Real> dcol(rows, cols);
          dcol.noalias() = ConstMatMap<Real>(w->data.data(), cout, rows).transpose() * dprod;
          Real* gx = in->grad_buffer();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < cin; ++c) {
              Real* grow = gx + (b * cin + c) * len;
              for (std::size_t k = 0; k < ksize; ++k) {
                const Real* src = dcol.data() + (c * ksize + k) * cols + b * tout;
                for (std::size_t t = 0; t < tout; ++t) {
                  const std::ptrdiff_t pos =
                      static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
                  if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) grow[pos] += src[t];
                }
              }
            }
          }
        }
      });
}

template <class Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& input, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BasicTensor<Real>& running_mean,
                             BasicTensor<Real>& running_var, bool training, const BatchNormOptions& options) {
  require(input.defined() && (input.rank() == 2 || input.rank() == 3),
          "batch_norm: expected [B,C] or [B,C,T] input");
  require(options.epsilon > 0.0, "batch_norm: epsilon must be positive");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t len = input.rank() == 3 ? input.dim(2) : 1;
  require(gamma.numel() == channels && beta.numel() == channels && running_mean.numel() == channels &&
              running_var.numel() == channels,
          "batch_norm: parameter size does not match channel count " + std::to_string(channels));
  if (training) {
    require(batch >= 2, "batch_norm: training mode needs batch size >= 2, got " + std::to_string(batch));
  }

  const std::size_t count = batch * len;
  const Real* x = input.data().data();
  std::vector<Real> out(input.numel());
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  auto xhat = std::make_shared<std::vector<Real>>(input.numel());

  for (std::size_t c = 0; c < channels; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < len; ++t) s += x[(b * channels + c) * len + t];
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < len; ++t) {
          const double d = x[(b * channels + c) * len + t] - mu;
          ss += d * d;
        }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      Real& rm = running_mean.data()[c];
      Real& rv = running_var.data()[c];
      rm = static_cast<Real>((1.0 - options.momentum) * rm + options.momentum * mu);
      rv = static_cast<Real>((1.0 - options.momentum) * rv + options.momentum * unbiased);
    } else {
      mu = running_mean.data()[c];
      var = running_var.data()[c];
    }
    const double istd = 1.0 / std::sqrt(var + options.epsilon);
    (*inv_std)[c] = istd;
    const double g = gamma.data()[c], bt = beta.data()[c];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = (b * channels + c) * len + t;
        const double h = (x[i] - mu) * istd;
        (*xhat)[i] = static_cast<Real>(h);
        out[i] = static_cast<Real>(g * h + bt);
      }
  }

  return detail::make_result<Real>(
      input.shape(), std::move(out), {input.node(), gamma.node(), beta.node()},
      [=](detail::Node<Real>& self) {
        auto& in = self.inputs[0];
        auto& gm = self.inputs[1];
        auto& bt = self.inputs[2];
        const Real* dy = self.grad.data();
        for (std::size_t c = 0; c < channels; ++c) {
          double sdy = 0.0, sdyx = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < len; ++t) {
              const std::size_t i = (b * channels + c) * len + t;
              sdy += dy[i];
              sdyx += static_cast<double>(dy[i]) * (*xhat)[i];
            }
          if (gm->requires_grad) gm->grad_buffer()[c] += static_cast<Real>(sdyx);
          if (bt->requires_grad) bt->grad_buffer()[c] += static_cast<Real>(sdy);
          if (!in->requires_grad) continue;
          Real* gx = in->grad_buffer();
          const double g = gm->data[c];
          const double istd = (*inv_std)[c];
          if (training) {
            const double n = static_cast<double>(count);
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = (b * channels + c) * len + t;
                gx[i] += static_cast<Real>(g * istd / n * (n * dy[i] - sdy - (*xhat)[i] * sdyx));
              }
          } else {
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = (b * channels + c) * len + t;
                gx[i] += static_cast<Real>(g * istd * dy[i]);
              }
          }
        }
      });
}

template <class Real>
BasicTensor<Real> relu(const BasicTensor<Real>& x) {
  return leaky_relu(x, Real(0));
}

template <class Real>
BasicTensor<Real> leaky_relu(const BasicTensor<Real>& x, Real slope) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = x.data()[i];
    out[i] = v > Real(0) ? v : v * slope;
  }
  return detail::make_result<Real>(x.shape(), std::move(out), {x.node()}, [slope](detail::Node<Real>& self) {
    auto& in = self.inputs[0];
    Real* g = in->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += in->data[i] > Real(0) ? self.grad[i] : self.grad[i] * slope;
  });
}

template <class Real>
BasicTensor<Real> sigmoid(const BasicTensor<Real>& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = static_cast<Real>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }
  auto y = std::make_shared<std::vector<Real>>(out);
  return detail::make_result<Real>(x.shape(), std::move(out), {x.node()}, [y](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*y)[i] * (Real(1) - (*y)[i]);
  });
}

template <class Real>
BasicTensor<Real> softmax(const BasicTensor<Real>& x) {
  require(x.defined() && x.rank() >= 1, "softmax: need at least one axis");
  const std::size_t width = x.shape().back();
  const std::size_t rows = width ? x.numel() / width : 0;
  std::vector<Real> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* src = x.data().data() + r * width;
    const double mx = *std::max_element(src, src + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(src[j] - mx);
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = static_cast<Real>(std::exp(src[j] - mx) / z);
  }
  auto y = std::make_shared<std::vector<Real>>(out);
  return detail::make_result<Real>(x.shape(), std::move(out), {x.node()}, [=](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += self.grad[r * width + j] * (*y)[r * width + j];
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t i = r * width + j;
        g[i] += static_cast<Real>((*y)[i] * (self.grad[i] - dot));
      }
    }
  });
}

template <class Real>
BasicTensor<Real> activation(const BasicTensor<Real>& x, Activation kind, Real slope) {
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, slope);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softmax: return softmax(x);
  }
  throw InvalidArgument("activation: unknown kind");
}

template <class Real>
BasicTensor<Real> global_avg_pool(const BasicTensor<Real>& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  require(len >= 1, "global_avg_pool: empty time axis");
  std::vector<Real> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += x.data()[r * len + t];
    out[r] = static_cast<Real>(s / static_cast<double>(len));
  }
  return detail::make_result<Real>(Shape{x.dim(0), x.dim(1)}, std::move(out), {x.node()},
                                   [rows, len](detail::Node<Real>& self) {
                                     Real* g = self.inputs[0]->grad_buffer();
                                     const Real inv = Real(1) / static_cast<Real>(len);
                                     for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t t = 0; t < len; ++t) g[r * len + t] += self.grad[r] * inv;
                                   });
}

template <class Real>
BasicTensor<Real> l2_normalize(const BasicTensor<Real>& x, Real epsilon) {
  require_rank(x, 2, "l2_normalize");
  require(epsilon > Real(0), "l2_normalize: epsilon must be positive");
  const std::size_t rows = x.dim(0), width = x.dim(1);
  std::vector<Real> out(x.numel());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < width; ++j) ss += static_cast<double>(x.data()[r * width + j]) * x.data()[r * width + j];
    const double n = std::sqrt(ss);
    (*norms)[r] = n;
    const double denom = std::max(n, static_cast<double>(epsilon));
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = static_cast<Real>(x.data()[r * width + j] / denom);
  }
  auto y = std::make_shared<std::vector<Real>>(out);
  return detail::make_result<Real>(x.shape(), std::move(out), {x.node()}, [=](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = (*norms)[r];
      if (n > static_cast<double>(epsilon)) {
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += self.grad[r * width + j] * (*y)[r * width + j];
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t i = r * width + j;
          g[i] += static_cast<Real>((self.grad[i] - (*y)[i] * dot) / n);
        }
      } else {
        for (std::size_t j = 0; j < width; ++j) g[r * width + j] += self.grad[r * width + j] / epsilon;
      }
    }
  });
}

template <class Real>
BasicTensor<Real> linear(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias) {
  require_rank(input, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t batch = input.dim(0), fin = input.dim(1), fout = weight.dim(0);
  require(weight.dim(1) == fin, "linear: input has " + std::to_string(fin) + " features but weight expects " +
                                    std::to_string(weight.dim(1)));
  if (bias.defined()) require(bias.numel() == fout, "linear: bias size does not match out_features");

  std::vector<Real> out(batch * fout);
  MatMap<Real> y(out.data(), batch, fout);
  y.noalias() = ConstMatMap<Real>(input.data().data(), batch, fin) *
                ConstMatMap<Real>(weight.data().data(), fout, fin).transpose();
  if (bias.defined()) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < fout; ++o) out[b * fout + o] += bias.data()[o];
  }

  std::vector<NodePtr<Real>> inputs{input.node(), weight.node()};
  const bool has_bias = bias.defined();
  if (has_bias) inputs.push_back(bias.node());
  return detail::make_result<Real>(
      Shape{batch, fout}, std::move(out), std::move(inputs), [=](detail::Node<Real>& self) {
        ConstMatMap<Real> dy(self.grad.data(), batch, fout);
        auto& in = self.inputs[0];
        auto& w = self.inputs[1];
        if (w->requires_grad) {
          MatMap<Real>(w->grad_buffer(), fout, fin).noalias() +=
              dy.transpose() * ConstMatMap<Real>(in->data.data(), batch, fin);
        }
        if (in->requires_grad) {
          MatMap<Real>(in->grad_buffer(), batch, fin).noalias() += dy * ConstMatMap<Real>(w->data.data(), fout, fin);
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          Real* gb = self.inputs[2]->grad_buffer();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < fout; ++o) gb[o] += self.grad[b * fout + o];
        }
      });
}

template <class Real>
BasicTensor<Real> concat_columns(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_rank(a, 2, "concat_columns");
  require_rank(b, 2, "concat_columns");
  require(a.dim(0) == b.dim(0), "concat_columns: batch mismatch " + std::to_string(a.dim(0)) + " vs " +
                                    std::to_string(b.dim(0)));
  const std::size_t rows = a.dim(0), wa = a.dim(1), wb = b.dim(1), w = wa + wb;
  std::vector<Real> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * wa, wa, out.data() + r * w);
    std::copy_n(b.data().data() + r * wb, wb, out.data() + r * w + wa);
  }
  return detail::make_result<Real>(Shape{rows, w}, std::move(out), {a.node(), b.node()},
                                   [=](detail::Node<Real>& self) {
                                     auto& na = self.inputs[0];
                                     auto& nb = self.inputs[1];
                                     if (na->requires_grad) {
                                       Real* g = na->grad_buffer();
                                       for (std::size_t r = 0; r < rows; ++r)
                                         for (std::size_t j = 0; j < wa; ++j) g[r * wa + j] += self.grad[r * w + j];
                                     }
                                     if (nb->requires_grad) {
                                       Real* g = nb->grad_buffer();
                                       for (std::size_t r = 0; r < rows; ++r)
                                         for (std::size_t j = 0; j < wb; ++j) g[r * wb + j] += self.grad[r * w + wa + j];
                                     }
                                   });
}

template <class Real>
BasicTensor<Real> slice_columns(const BasicTensor<Real>& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_columns");
  require(begin < end && end <= x.dim(1), "slice_columns: range out of bounds");
  const std::size_t rows = x.dim(0), w = x.dim(1), sw = end - begin;
  std::vector<Real> out(rows * sw);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * w + begin, sw, out.data() + r * sw);
  return detail::make_result<Real>(Shape{rows, sw}, std::move(out), {x.node()}, [=](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < sw; ++j) g[r * w + begin + j] += self.grad[r * sw + j];
  });
}

template <class Real>
BasicTensor<Real> gather_rows(const BasicTensor<Real>& x, std::span<const std::uint32_t> index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), w = x.dim(1);
  auto idx = std::make_shared<std::vector<std::uint32_t>>(index.begin(), index.end());
  std::vector<Real> out(idx->size() * w);
  for (std::size_t m = 0; m < idx->size(); ++m) {
    require((*idx)[m] < n, "gather_rows: index out of range");
    std::copy_n(x.data().data() + (*idx)[m] * w, w, out.data() + m * w);
  }
  return detail::make_result<Real>(Shape{idx->size(), w}, std::move(out), {x.node()}, [=](detail::Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer();
    for (std::size_t m = 0; m < idx->size(); ++m)
      for (std::size_t j = 0; j < w; ++j) g[(*idx)[m] * w + j] += self.grad[m * w + j];
  });
}

template <class Real>
BasicTensor<Real> gather_add(const BasicTensor<Real>& a, std::span<const std::uint32_t> index_a,
                             const BasicTensor<Real>& b, std::span<const std::uint32_t> index_b) {
  require_rank(a, 2, "gather_add");
  require_rank(b, 2, "gather_add");
  require(a.dim(1) == b.dim(1), "gather_add: width mismatch");
  require(index_a.size() == index_b.size(), "gather_add: index lists differ in length");
  const std::size_t w = a.dim(1);
  auto ia = std::make_shared<std::vector<std::uint32_t>>(index_a.begin(), index_a.end());
  auto ib = std::make_shared<std::vector<std::uint32_t>>(index_b.begin(), index_b.end());
  const std::size_t m_count = ia->size();
  std::vector<Real> out(m_count * w);
  for (std::size_t m = 0; m < m_count; ++m) {
    require((*ia)[m] < a.dim(0) && (*ib)[m] < b.dim(0), "gather_add: index out of range");
    const Real* ra = a.data().data() + (*ia)[m] * w;
    const Real* rb = b.data().data() + (*ib)[m] * w;
    Real* dst = out.data() + m * w;
    for (std::size_t j = 0; j < w; ++j) dst[j] = ra[j] + rb[j];
  }
  return detail::make_result<Real>(Shape{m_count, w}, std::move(out), {a.node(), b.node()},
                                   [=](detail::Node<Real>& self) {
                                     auto& na = self.inputs[0];
                                     auto& nb = self.inputs[1];
                                     if (na->requires_grad) {
                                       Real* g = na->grad_buffer();
                                       for (std::size_t m = 0; m < m_count; ++m)
                                         for (std::size_t j = 0; j < w; ++j) g[(*ia)[m] * w + j] += self.grad[m * w + j];
                                     }
                                     if (nb->requires_grad) {
                                       Real* g = nb->grad_buffer();
                                       for (std::size_t m = 0; m < m_count; ++m)
                                         for (std::size_t j = 0; j < w; ++j) g[(*ib)[m] * w + j] += self.grad[m * w + j];
                                     }
                                   });
}

template <class Real>
BasicTensor<Real> bce_loss(const BasicTensor<Real>& scores, std::span<const Real> labels) {
  require(scores.defined() && scores.numel() > 0, "bce_loss: empty input");
  require(scores.numel() == labels.size(), "bce_loss: score and label counts differ");
  constexpr double clamp = 1e-7;
  const std::size_t n = labels.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(static_cast<double>(scores.data()[i]), clamp, 1.0 - clamp);
    const double y = labels[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  auto y = std::make_shared<std::vector<Real>>(labels.begin(), labels.end());
  return detail::make_result<Real>(Shape{}, {static_cast<Real>(acc / n)}, {scores.node()},
                                   [=](detail::Node<Real>& self) {
                                     auto& in = self.inputs[0];
                                     Real* g = in->grad_buffer();
                                     for (std::size_t i = 0; i < n; ++i) {
                                       const double p = in->data[i];
                                       if (p <= clamp || p >= 1.0 - clamp) continue;
                                       const double d = (p - (*y)[i]) / (p * (1.0 - p)) / static_cast<double>(n);
                                       g[i] += static_cast<Real>(self.grad[0] * d);
                                     }
                                   });
}

template <class Real>
BasicTensor<Real> bce_with_logits(const BasicTensor<Real>& logits, std::span<const Real> labels) {
  require(logits.defined() && logits.numel() > 0, "bce_with_logits: empty input");
  require(logits.numel() == labels.size(), "bce_with_logits: logit and label counts differ");
  const std::size_t n = labels.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = logits.data()[i];
    acc += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
  }
  auto y = std::make_shared<std::vector<Real>>(labels.begin(), labels.end());
  return detail::make_result<Real>(Shape{}, {static_cast<Real>(acc / n)}, {logits.node()},
                                   [=](detail::Node<Real>& self) {
                                     auto& in = self.inputs[0];
                                     Real* g = in->grad_buffer();
                                     const double scale = self.grad[0] / static_cast<double>(n);
                                     for (std::size_t i = 0; i < n; ++i) {
                                       const double x = in->data[i];
                                       const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                                       g[i] += static_cast<Real>(scale * (p - (*y)[i]));
                                     }
                                   });
}

template <class Real>
BasicTensor<Real> ce_loss(const BasicTensor<Real>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "ce_loss");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  require(batch > 0, "ce_loss: empty batch");
  require(labels.size() == batch, "ce_loss: label count does not match batch");
  for (int l : labels) {
    require(l >= 0 && static_cast<std::size_t>(l) < classes,
            "ce_loss: label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
  }
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  double acc = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* row = logits.data().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    acc += lse - row[labels[b]];
    for (std::size_t c = 0; c < classes; ++c) (*probs)[b * classes + c] = std::exp(row[c] - lse);
  }
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  return detail::make_result<Real>(Shape{}, {static_cast<Real>(acc / batch)}, {logits.node()},
                                   [=](detail::Node<Real>& self) {
                                     Real* g = self.inputs[0]->grad_buffer();
                                     const double scale = self.grad[0] / static_cast<double>(batch);
                                     for (std::size_t b = 0; b < batch; ++b)
                                       for (std::size_t c = 0; c < classes; ++c) {
                                         const double onehot = static_cast<int>(c) == (*lab)[b] ? 1.0 : 0.0;
                                         g[b * classes + c] += static_cast<Real>(scale * ((*probs)[b * classes + c] - onehot));
                                       }
                                   });
}

#define SELFTIME_INSTANTIATE(R)                                                                                     \
  template BasicTensor<R> add(const BasicTensor<R>&, const BasicTensor<R>&);                                        \
  template BasicTensor<R> mul(const BasicTensor<R>&, const BasicTensor<R>&);                                        \
  template BasicTensor<R> scale(const BasicTensor<R>&, R);                                                          \
  template BasicTensor<R> sum(const BasicTensor<R>&);                                                               \
  template BasicTensor<R> mean(const BasicTensor<R>&);                                                              \
  template BasicTensor<R> reshape(const BasicTensor<R>&, Shape);                                                    \
  template BasicTensor<R> conv1d(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&, std::size_t,  \
                                 std::size_t);                                                                      \
  template BasicTensor<R> batch_norm(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&,           \
                                     BasicTensor<R>&, BasicTensor<R>&, bool, const BatchNormOptions&);              \
  template BasicTensor<R> relu(const BasicTensor<R>&);                                                              \
  template BasicTensor<R> leaky_relu(const BasicTensor<R>&, R);                                                     \
  template BasicTensor<R> sigmoid(const BasicTensor<R>&);                                                           \
  template BasicTensor<R> softmax(const BasicTensor<R>&);                                                           \
  template BasicTensor<R> activation(const BasicTensor<R>&, Activation, R);                                         \
  template BasicTensor<R> global_avg_pool(const BasicTensor<R>&);                                                   \
  template BasicTensor<R> l2_normalize(const BasicTensor<R>&, R);                                                   \
  template BasicTensor<R> linear(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&);              \
  template BasicTensor<R> concat_columns(const BasicTensor<R>&, const BasicTensor<R>&);                             \
  template BasicTensor<R> slice_columns(const BasicTensor<R>&, std::size_t, std::size_t);                           \
  template BasicTensor<R> gather_rows(const BasicTensor<R>&, std::span<const std::uint32_t>);                       \
  template BasicTensor<R> gather_add(const BasicTensor<R>&, std::span<const std::uint32_t>, const BasicTensor<R>&,  \
                                     std::span<const std::uint32_t>);                                               \
  template BasicTensor<R> bce_loss(const BasicTensor<R>&, std::span<const R>);                                      \
  template BasicTensor<R> bce_with_logits(const BasicTensor<R>&, std::span<const R>);                               \
  template BasicTensor<R> ce_loss(const BasicTensor<R>&, std::span<const int>);

SELFTIME_INSTANTIATE(float)
SELFTIME_INSTANTIATE(double)

#undef SELFTIME_INSTANTIATE

}  // namespace selftime::nn
