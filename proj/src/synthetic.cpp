#include "selftime/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "selftime/errors.hpp"
#include "selftime/rng.hpp"

namespace selftime::data {

TimeSeriesDataset make_waveforms(const WaveformOptions& o) {
  if (o.count == 0 || o.length < 2) throw InvalidArgument("make_waveforms: need count >= 1 and length >= 2");
  if (!(o.freq_min > 0 && o.freq_max >= o.freq_min)) throw InvalidArgument("make_waveforms: bad frequency band");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> values;
  values.reserve(o.count * o.length);
  std::vector<int> labels;
  const double T = static_cast<double>(o.length);
  for (std::size_t i = 0; i < o.count; ++i) {
    const int cls = static_cast<int>(i % 3);
    RngStream rng(o.seed, derive_stream("waveform", {i}));
    const double f = o.freq_min + (o.freq_max - o.freq_min) * rng.uniform01();
    const double phase = two_pi * rng.uniform01();
    const double amp = o.amp_min + (o.amp_max - o.amp_min) * rng.uniform01();
    for (std::size_t t = 0; t < o.length; ++t) {
      const double s = static_cast<double>(t) / T;
      double v = 0.0;
      switch (cls) {
        case 0:
          v = std::sin(two_pi * f * s + phase);
          break;
        case 1: {
          const double cyc = f * s + phase / two_pi;
          v = 2.0 * (cyc - std::floor(cyc)) - 1.0;
          break;
        }
        default: {
          const double f1 = f * o.chirp_ratio;
          v = std::sin(two_pi * (f * s + 0.5 * (f1 - f) * s * s) + phase);
          break;
        }
      }
      values.push_back(amp * v + rng.normal(0.0, o.noise));
    }
    labels.push_back(cls);
  }
  return from_rows(std::move(values), o.length, std::move(labels), o.name);
}

WaveformOptions related_waveforms(const WaveformOptions& source) {
  WaveformOptions b = source;
  b.length = source.length * 3 / 4 < 16 ? 16 : source.length * 3 / 4;
  b.freq_min = source.freq_min * 1.25;
  b.freq_max = source.freq_max * 1.25;
  b.noise = source.noise * 1.5;
  b.seed = mix64(source.seed ^ 0xb5ULL);
  b.name = source.name + "_related";
  return b;
}

}  // namespace selftime::data
