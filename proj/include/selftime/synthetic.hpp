#pragma once

#include <cstdint>
#include <string>

#include "selftime/dataset.hpp"

namespace selftime::data {

// Three waveform classes with randomised frequency, phase and amplitude:
// 0 sine, 1 sawtooth, 2 linear chirp. Class counts are balanced (round robin).
struct WaveformOptions {
  std::size_t count = 240;
  std::size_t length = 128;
  double noise = 0.1;          // additive Gaussian noise sd
  double freq_min = 1.5;       // cycles per series
  double freq_max = 6.0;
  double amp_min = 0.8;
  double amp_max = 1.2;
  double chirp_ratio = 4.0;    // end frequency / start frequency of the chirp class
  std::uint64_t seed = 0;
  std::string name = "waveforms";
};

TimeSeriesDataset make_waveforms(const WaveformOptions& options);

// A related domain for transfer checks: same three shapes, other length,
// frequency band and noise level.
WaveformOptions related_waveforms(const WaveformOptions& source);

}  // namespace selftime::data
