#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "selftime/augment.hpp"
#include "selftime/rng.hpp"

namespace selftime::relation {

using augment::Series;

struct TemporalRelationConfig {
  int classes = 3;
  double piece_ratio = 0.2;
  // Piece pairs drawn per sample and step.
  int pairs_per_sample = 1;
  // Draw the label uniformly first, then (u, v) within that label's bucket.
  bool stratified = false;

  // max(1, round(piece_ratio * length))
  std::size_t piece_length(std::size_t series_length) const;
};

// Bucketed temporal distance between two piece starts:
// D = floor(T / C); label k-1 when (k-1)D < |u - v| <= kD, the top class
// collecting everything beyond (C-1)D.
int temporal_label(std::size_t length, int classes, std::size_t u, std::size_t v);

struct PiecePair {
  Series piece_u;
  Series piece_v;
  std::size_t start_u = 0;
  std::size_t start_v = 0;
  int label = 0;
};

PiecePair sample_piece_pair(std::span<const double> x, const TemporalRelationConfig& cfg, RngStream& rng);
PiecePair piece_pair_at(std::span<const double> x, std::size_t piece_length, int classes, std::size_t start_u,
                        std::size_t start_v);

// Number of ordered start pairs (u, v) in [0, T-L]^2 that fall into each label.
std::vector<std::uint64_t> label_histogram(std::size_t length, int classes, std::size_t piece_length);

// Views and pair enumeration for the inter-sample branch of one minibatch.
// View rows are laid out sample-major: row = position * K + view.
struct InterSampleBatch {
  std::size_t batch_size = 0;
  std::size_t views_per_sample = 0;
  std::size_t length = 0;
  std::vector<double> views;                // batch_size * K * length
  std::vector<std::uint32_t> anchor_index;  // minibatch position per anchor
  std::vector<std::uint32_t> partner_index; // negative partner per anchor
  std::vector<std::uint32_t> left;          // view row of the first pair member
  std::vector<std::uint32_t> right;         // view row of the second pair member
  std::vector<float> labels;                // 1 positive, 0 negative

  std::size_t pair_count() const { return labels.size(); }
  std::span<const double> view(std::size_t sample, std::size_t k) const {
    return std::span<const double>(views).subspan((sample * views_per_sample + k) * length, length);
  }
};

// Views of sample m use rng.child("view", {sample_ids[m], i}); the partner
// ordering consumes `rng` itself. sample_ids defaults to minibatch positions.
InterSampleBatch build_inter_batch(std::span<const Series> minibatch, int views_per_sample,
                                   const augment::AugmentationPolicy& policy, RngStream& rng,
                                   std::span<const std::uint64_t> sample_ids = {});

// Partner of each position: the next entry of a random cyclic order.
std::vector<std::uint32_t> random_partners(std::size_t count, RngStream& rng);

}  // namespace selftime::relation
