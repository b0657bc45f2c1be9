#include "selftime/spline.hpp"

#include <algorithm>

#include "selftime/errors.hpp"

namespace selftime {

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> knots_x, std::vector<double> knots_y)
    : x_(std::move(knots_x)), y_(std::move(knots_y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw InvalidArgument("spline: need at least two knots with matching values");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw InvalidArgument("spline: knot positions must be strictly increasing");
  }
  m_.assign(n, 0.0);
  if (n == 2) return;

  // Thomas algorithm on the interior second derivatives.
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double lower = x_[i + 1] - x_[i];  // sub-diagonal entry h_i
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = (rhs[i] - upper[i] * m_[i + 2]) / diag[i];
}

double NaturalCubicSpline::operator()(double x) const {
  const std::size_t n = x_.size();
  std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
  i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

std::vector<double> NaturalCubicSpline::evaluate(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (*this)(xs[i]);
  return out;
}

std::vector<double> even_knots(std::size_t count, std::size_t length) {
  if (count < 2) throw InvalidArgument("even_knots: need at least two knots");
  std::vector<double> out(count);
  const double span = length > 1 ? static_cast<double>(length - 1) : 1.0;
  for (std::size_t i = 0; i < count; ++i) out[i] = span * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

double interp_linear(std::span<const double> xs, std::span<const double> ys, double at) {
  const std::size_t n = xs.size();
  if (n == 0 || ys.size() != n) throw InvalidArgument("interp_linear: empty or mismatched inputs");
  if (at <= xs.front()) return ys.front();
  if (at >= xs.back()) return ys.back();
  std::size_t hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), at) - xs.begin());
  const std::size_t lo = hi - 1;
  const double dx = xs[hi] - xs[lo];
  if (dx <= 0.0) return ys[hi];
  const double w = (at - xs[lo]) / dx;
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

std::vector<double> resample_linear(std::span<const double> values, std::size_t length) {
  if (values.empty() || length == 0) throw InvalidArgument("resample_linear: empty input or target");
  std::vector<double> out(length);
  if (values.size() == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }
  if (length == 1) {
    out[0] = values[0];
    return out;
  }
  const double scale = static_cast<double>(values.size() - 1) / static_cast<double>(length - 1);
  for (std::size_t t = 0; t < length; ++t) {
    const double pos = static_cast<double>(t) * scale;
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo >= values.size() - 1) lo = values.size() - 2;
    const double w = pos - static_cast<double>(lo);
    out[t] = values[lo] + w * (values[lo + 1] - values[lo]);
  }
  return out;
}

}  // namespace selftime
