#include "selftime/augment.hpp"

#include <algorithm>
#include <cmath>

#include "selftime/errors.hpp"
#include "selftime/spline.hpp"

namespace selftime::augment {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t rounded_length(double ratio, std::size_t length) {
  const auto n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(length)));
  return std::clamp<std::size_t>(n, 1, length);
}

}  // namespace

const std::vector<std::string>& step_kinds() {
  static const std::vector<std::string> kinds{"jitter",    "scaling",      "cutout",     "magnitude_warp",
                                              "time_warp", "window_slice", "window_warp"};
  return kinds;
}

std::string step_name(const Step& step) { return step_kinds().at(step.index()); }

Step make_step(const std::string& kind) {
  if (kind == "jitter") return Jitter{};
  if (kind == "scaling") return Scaling{};
  if (kind == "cutout") return Cutout{};
  if (kind == "magnitude_warp") return MagnitudeWarp{};
  if (kind == "time_warp") return TimeWarp{};
  if (kind == "window_slice") return WindowSlice{};
  if (kind == "window_warp") return WindowWarp{};
  throw InvalidArgument("unknown augmentation '" + kind + "'");
}

AugmentationPolicy AugmentationPolicy::standard() { return {{MagnitudeWarp{}, TimeWarp{}}}; }

void AugmentationPolicy::validate() const {
  if (steps.empty()) throw InvalidArgument("augmentation policy has no steps");
  auto fail = [](const std::string& what) { throw InvalidArgument("augmentation policy: " + what); };
  for (const auto& step : steps) {
    std::visit(Overloaded{
                   [&](const Jitter& s) { if (s.sigma < 0) fail("jitter sigma must be >= 0"); },
                   [&](const Scaling& s) { if (s.sigma < 0) fail("scaling sigma must be >= 0"); },
                   [&](const Cutout& s) { if (!(s.ratio > 0 && s.ratio < 1)) fail("cutout ratio must be in (0,1)"); },
                   [&](const MagnitudeWarp& s) {
                     if (s.knots < 2) fail("magnitude_warp knots must be >= 2");
                     if (s.sigma < 0) fail("magnitude_warp sigma must be >= 0");
                   },
                   [&](const TimeWarp& s) {
                     if (s.knots < 2) fail("time_warp knots must be >= 2");
                     if (s.sigma < 0) fail("time_warp sigma must be >= 0");
                   },
                   [&](const WindowSlice& s) {
                     if (!(s.keep_ratio > 0 && s.keep_ratio <= 1)) fail("window_slice keep_ratio must be in (0,1]");
                   },
                   [&](const WindowWarp& s) {
                     if (!(s.window_ratio > 0 && s.window_ratio < 1)) fail("window_warp window_ratio must be in (0,1)");
                     if (s.factors.empty()) fail("window_warp needs at least one factor");
                     for (double f : s.factors)
                       if (!(f > 0)) fail("window_warp factors must be > 0");
                   },
               },
               step);
  }
}

Series jitter(std::span<const double> x, double sigma, RngStream& rng) {
  if (sigma < 0) throw InvalidArgument("jitter: sigma must be >= 0");
  Series out(x.begin(), x.end());
  for (double& v : out) v += rng.normal(0.0, sigma);
  return out;
}

Series scale_series(std::span<const double> x, double factor) {
  Series out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return out;
}

Series scaling(std::span<const double> x, double sigma, RngStream& rng, double mean) {
  if (sigma < 0) throw InvalidArgument("scaling: sigma must be >= 0");
  return scale_series(x, rng.normal(mean, sigma));
}

std::size_t cutout_length(std::size_t length, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(length)));
}

Series cutout_at(std::span<const double> x, std::size_t start, std::size_t length) {
  if (start + length > x.size()) throw InvalidArgument("cutout: segment runs past the end of the series");
  Series out(x.begin(), x.end());
  std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(start), length, 0.0);
  return out;
}

Series cutout(std::span<const double> x, double ratio, RngStream& rng) {
  if (!(ratio > 0 && ratio < 1)) throw InvalidArgument("cutout: ratio must be in (0,1)");
  const std::size_t len = cutout_length(x.size(), ratio);
  if (len < 1) throw InvalidArgument("cutout: series of length " + std::to_string(x.size()) + " too short for ratio");
  const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(x.size() - len)));
  return cutout_at(x, start, len);
}

WarpKnots draw_warp_knots(std::size_t length, int knots, double sigma, RngStream& rng) {
  if (knots < 2) throw InvalidArgument("warp: knot count must be >= 2");
  if (sigma < 0) throw InvalidArgument("warp: sigma must be >= 0");
  WarpKnots out;
  out.positions = even_knots(static_cast<std::size_t>(knots) + 2, std::max<std::size_t>(length, 2));
  out.values.resize(out.positions.size());
  for (double& v : out.values) v = rng.normal(1.0, sigma);
  return out;
}

std::vector<double> spline_curve(const WarpKnots& knots, std::size_t length) {
  NaturalCubicSpline spline(knots.positions, knots.values);
  std::vector<double> curve(length);
  for (std::size_t t = 0; t < length; ++t) curve[t] = spline(static_cast<double>(t));
  return curve;
}

Series magnitude_warp_with(std::span<const double> x, const WarpKnots& knots) {
  const auto curve = spline_curve(knots, x.size());
  Series out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = x[t] * curve[t];
  return out;
}

Series magnitude_warp(std::span<const double> x, int knots, double sigma, RngStream& rng) {
  return magnitude_warp_with(x, draw_warp_knots(x.size(), knots, sigma, rng));
}

std::vector<double> time_warp_path(const WarpKnots& knots, std::size_t length) {
  auto speed = spline_curve(knots, length);
  std::vector<double> path(length);
  double acc = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    acc += std::max(speed[t], 1e-3);
    path[t] = acc;
  }
  if (length < 2) return std::vector<double>(length, 0.0);
  const double first = path.front();
  const double span = path.back() - first;
  const double target = static_cast<double>(length - 1);
  for (double& p : path) p = (p - first) / span * target;
  path.back() = target;
  return path;
}

Series time_warp_with(std::span<const double> x, const WarpKnots& knots) {
  if (x.size() < 2) return Series(x.begin(), x.end());
  const auto path = time_warp_path(knots, x.size());
  Series out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = interp_linear(path, x, static_cast<double>(t));
  return out;
}

Series time_warp(std::span<const double> x, int knots, double sigma, RngStream& rng) {
  return time_warp_with(x, draw_warp_knots(x.size(), knots, sigma, rng));
}

Series window_slice_at(std::span<const double> x, std::size_t start, std::size_t length) {
  if (length == 0 || start + length > x.size()) throw InvalidArgument("window_slice: crop out of range");
  return resample_linear(x.subspan(start, length), x.size());
}

Series window_slice(std::span<const double> x, double keep_ratio, RngStream& rng) {
  if (!(keep_ratio > 0 && keep_ratio <= 1)) throw InvalidArgument("window_slice: keep_ratio must be in (0,1]");
  if (x.empty()) return {};
  const std::size_t len = rounded_length(keep_ratio, x.size());
  const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(x.size() - len)));
  return window_slice_at(x, start, len);
}

Series window_warp_at(std::span<const double> x, std::size_t start, std::size_t length, double factor) {
  if (length == 0 || start + length > x.size()) throw InvalidArgument("window_warp: window out of range");
  if (!(factor > 0)) throw InvalidArgument("window_warp: factor must be > 0");
  const auto warped_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(length) * factor)));
  const auto warped = resample_linear(x.subspan(start, length), warped_len);
  Series joined;
  joined.reserve(x.size() - length + warped_len);
  joined.insert(joined.end(), x.begin(), x.begin() + static_cast<std::ptrdiff_t>(start));
  joined.insert(joined.end(), warped.begin(), warped.end());
  joined.insert(joined.end(), x.begin() + static_cast<std::ptrdiff_t>(start + length), x.end());
  return resample_linear(joined, x.size());
}

Series window_warp(std::span<const double> x, double window_ratio, std::span<const double> factors, RngStream& rng) {
  if (!(window_ratio > 0 && window_ratio < 1)) throw InvalidArgument("window_warp: window_ratio must be in (0,1)");
  if (factors.empty()) throw InvalidArgument("window_warp: no factors");
  if (x.empty()) return {};
  const std::size_t len = rounded_length(window_ratio, x.size());
  const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(x.size() - len)));
  const double factor = factors[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(factors.size()) - 1))];
  return window_warp_at(x, start, len, factor);
}

Series apply_step(std::span<const double> x, const Step& step, RngStream& rng) {
  return std::visit(Overloaded{
                        [&](const Jitter& s) { return jitter(x, s.sigma, rng); },
                        [&](const Scaling& s) { return scaling(x, s.sigma, rng, s.mean); },
                        [&](const Cutout& s) { return cutout(x, s.ratio, rng); },
                        [&](const MagnitudeWarp& s) { return magnitude_warp(x, s.knots, s.sigma, rng); },
                        [&](const TimeWarp& s) { return time_warp(x, s.knots, s.sigma, rng); },
                        [&](const WindowSlice& s) { return window_slice(x, s.keep_ratio, rng); },
                        [&](const WindowWarp& s) { return window_warp(x, s.window_ratio, s.factors, rng); },
                    },
                    step);
}

Series apply_policy(std::span<const double> x, const AugmentationPolicy& policy, RngStream& rng) {
  if (policy.steps.empty()) throw InvalidArgument("apply_policy: policy has no steps");
  Series current(x.begin(), x.end());
  for (const auto& step : policy.steps) current = apply_step(current, step, rng);
  return current;
}

RngStream view_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample, std::uint64_t view) {
  return RngStream(seed, derive_stream("view", {epoch, sample, view}));
}

}  // namespace selftime::augment
