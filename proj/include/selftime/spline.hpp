#pragma once

#include <span>
#include <vector>

namespace selftime {

// Natural cubic spline (zero second derivative at both ends) through
// strictly increasing knots.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> knots_x, std::vector<double> knots_y);

  double operator()(double x) const;
  std::vector<double> evaluate(std::span<const double> xs) const;

  const std::vector<double>& knots_x() const { return x_; }
  const std::vector<double>& knots_y() const { return y_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
};

// Evenly spaced positions spanning [0, length - 1], both ends included.
std::vector<double> even_knots(std::size_t count, std::size_t length);

// Piecewise-linear interpolation of (xs, ys) at `at`; xs must be
// non-decreasing. Values outside the range are clamped to the end values.
double interp_linear(std::span<const double> xs, std::span<const double> ys, double at);

// Resamples `values` to `length` points, keeping both endpoints.
std::vector<double> resample_linear(std::span<const double> values, std::size_t length);

}  // namespace selftime
