#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace selftime {

// SplitMix64 finalizer; used both for stream derivation and engine seeding.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over a tag, so call sites can name their streams ("view", "piece").
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives a stream id from an ordered list of coordinates (epoch, sample, view, ...).
// Order-independent across calls: the id depends only on the coordinates themselves.
inline std::uint64_t derive_stream(std::string_view tag,
                                   std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = mix64(tag_hash(tag));
  for (std::uint64_t c : coords) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

// A reproducible random stream identified by (seed, stream_id).
class RngStream {
 public:
  using Engine = std::mt19937_64;

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), engine_(make_seed(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  Engine& engine() { return engine_; }

  double normal(double mean, double stddev) {
    if (stddev == 0.0) return mean;
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
  }
  double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  // Uniform integer on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  RngStream child(std::string_view tag, std::initializer_list<std::uint64_t> coords) const {
    std::uint64_t id = stream_id_;
    for (std::uint64_t c : coords) id = mix64(id ^ mix64(c));
    return RngStream(seed_, mix64(id ^ tag_hash(tag)));
  }

 private:
  static std::seed_seq::result_type lo32(std::uint64_t v) {
    return static_cast<std::seed_seq::result_type>(v & 0xffffffffULL);
  }
  static Engine make_seed(std::uint64_t seed, std::uint64_t stream_id) {
    const std::uint64_t a = mix64(seed);
    const std::uint64_t b = mix64(a ^ stream_id);
    std::seed_seq seq{lo32(a), lo32(a >> 32), lo32(b), lo32(b >> 32)};
    return Engine(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  Engine engine_;
};

}  // namespace selftime
