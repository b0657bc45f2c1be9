#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "selftime/rng.hpp"

namespace selftime::augment {

using Series = std::vector<double>;

struct Jitter {
  double sigma = 0.2;
};
// s ~ Normal(mean, sigma^2); mean 0 reproduces the literal zero-mean reading.
struct Scaling {
  double sigma = 0.4;
  double mean = 1.0;
};
struct Cutout {
  double ratio = 0.1;
};
struct MagnitudeWarp {
  int knots = 4;
  double sigma = 0.3;
};
struct TimeWarp {
  int knots = 8;
  double sigma = 0.2;
};
struct WindowSlice {
  double keep_ratio = 0.8;
};
struct WindowWarp {
  double window_ratio = 0.3;
  std::vector<double> factors{0.5, 2.0};
};

using Step = std::variant<Jitter, Scaling, Cutout, MagnitudeWarp, TimeWarp, WindowSlice, WindowWarp>;

std::string step_name(const Step& step);
// Default-parameter step for a kind name ("jitter", "time_warp", ...).
Step make_step(const std::string& kind);
const std::vector<std::string>& step_kinds();

struct AugmentationPolicy {
  std::vector<Step> steps;

  // Magnitude warping followed by time warping.
  static AugmentationPolicy standard();
  // Throws InvalidArgument when a parameter is out of range.
  void validate() const;
};

// Each transform comes in two layers: a draw from the stream and a
// deterministic core that takes the drawn values. The cores double as test hooks.

Series jitter(std::span<const double> x, double sigma, RngStream& rng);

Series scaling(std::span<const double> x, double sigma, RngStream& rng, double mean = 1.0);
Series scale_series(std::span<const double> x, double factor);

Series cutout(std::span<const double> x, double ratio, RngStream& rng);
Series cutout_at(std::span<const double> x, std::size_t start, std::size_t length);
std::size_t cutout_length(std::size_t length, double ratio);

struct WarpKnots {
  std::vector<double> positions;
  std::vector<double> values;
};
// knots + 2 evenly spaced positions over [0, length-1] (the ends included),
// each with a value drawn from Normal(1, sigma^2).
WarpKnots draw_warp_knots(std::size_t length, int knots, double sigma, RngStream& rng);
std::vector<double> spline_curve(const WarpKnots& knots, std::size_t length);

Series magnitude_warp(std::span<const double> x, int knots, double sigma, RngStream& rng);
Series magnitude_warp_with(std::span<const double> x, const WarpKnots& knots);

Series time_warp(std::span<const double> x, int knots, double sigma, RngStream& rng);
Series time_warp_with(std::span<const double> x, const WarpKnots& knots);
// Cumulative warp path rescaled so that 0 -> 0 and length-1 -> length-1.
std::vector<double> time_warp_path(const WarpKnots& knots, std::size_t length);

Series window_slice(std::span<const double> x, double keep_ratio, RngStream& rng);
Series window_slice_at(std::span<const double> x, std::size_t start, std::size_t length);

Series window_warp(std::span<const double> x, double window_ratio, std::span<const double> factors, RngStream& rng);
Series window_warp_at(std::span<const double> x, std::size_t start, std::size_t length, double factor);

Series apply_step(std::span<const double> x, const Step& step, RngStream& rng);
// Steps run in order on one shared stream.
Series apply_policy(std::span<const double> x, const AugmentationPolicy& policy, RngStream& rng);

// Stream for view `view` of sample `sample` in epoch `epoch`; depends only on
// these coordinates, so views can be generated in any order.
RngStream view_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample, std::uint64_t view);

}  // namespace selftime::augment
