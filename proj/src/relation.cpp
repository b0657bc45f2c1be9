#include "selftime/relation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selftime/errors.hpp"

namespace selftime::relation {

std::size_t TemporalRelationConfig::piece_length(std::size_t series_length) const {
  const auto l = static_cast<long long>(std::llround(piece_ratio * static_cast<double>(series_length)));
  return static_cast<std::size_t>(std::max<long long>(1, l));
}

int temporal_label(std::size_t length, int classes, std::size_t u, std::size_t v) {
  if (classes < 2) throw InvalidArgument("temporal_label: need at least 2 classes, got " + std::to_string(classes));
  if (length < static_cast<std::size_t>(classes)) {
    throw InvalidArgument("temporal_label: series length " + std::to_string(length) + " is shorter than class count " +
                          std::to_string(classes));
  }
  if (u >= length || v >= length) throw InvalidArgument("temporal_label: piece start outside the series");
  const std::size_t bucket = length / static_cast<std::size_t>(classes);
  const std::size_t d = u > v ? u - v : v - u;
  if (d == 0) return 0;
  const std::size_t k = (d + bucket - 1) / bucket;  // smallest k with d <= k*D
  return static_cast<int>(std::min<std::size_t>(k, static_cast<std::size_t>(classes))) - 1;
}

PiecePair piece_pair_at(std::span<const double> x, std::size_t piece_length, int classes, std::size_t start_u,
                        std::size_t start_v) {
  if (piece_length == 0 || piece_length > x.size()) {
    throw InvalidArgument("piece length " + std::to_string(piece_length) + " does not fit series of length " +
                          std::to_string(x.size()));
  }
  const std::size_t last = x.size() - piece_length;
  if (start_u > last || start_v > last) throw InvalidArgument("piece start out of range");
  PiecePair pair;
  pair.start_u = start_u;
  pair.start_v = start_v;
  pair.piece_u.assign(x.begin() + static_cast<std::ptrdiff_t>(start_u),
                      x.begin() + static_cast<std::ptrdiff_t>(start_u + piece_length));
  pair.piece_v.assign(x.begin() + static_cast<std::ptrdiff_t>(start_v),
                      x.begin() + static_cast<std::ptrdiff_t>(start_v + piece_length));
  pair.label = temporal_label(x.size(), classes, start_u, start_v);
  return pair;
}

namespace {

// Draws (u, v) with the label chosen uniformly among reachable labels.
std::pair<std::size_t, std::size_t> stratified_starts(std::size_t length, int classes, std::size_t piece_length,
                                                      RngStream& rng) {
  const std::size_t positions = length - piece_length + 1;
  std::vector<std::vector<std::size_t>> distances(static_cast<std::size_t>(classes));
  for (std::size_t d = 0; d < positions; ++d) distances[temporal_label(length, classes, 0, d)].push_back(d);
  std::vector<std::size_t> reachable;
  for (std::size_t c = 0; c < distances.size(); ++c)
    if (!distances[c].empty()) reachable.push_back(c);
  const std::size_t label = reachable[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(reachable.size()) - 1))];

  // Ordered pairs at distance d: positions for d == 0, 2 * (positions - d) otherwise.
  const auto& ds = distances[label];
  std::vector<double> weights(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    weights[i] = ds[i] == 0 ? static_cast<double>(positions) : 2.0 * static_cast<double>(positions - ds[i]);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const std::size_t d = ds[pick(rng.engine())];
  const auto u = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(positions - d) - 1));
  if (d > 0 && rng.uniform_int(0, 1) == 1) return {u + d, u};
  return {u, u + d};
}

}  // namespace

PiecePair sample_piece_pair(std::span<const double> x, const TemporalRelationConfig& cfg, RngStream& rng) {
  const std::size_t len = cfg.piece_length(x.size());
  if (len > x.size()) {
    throw InvalidArgument("piece length " + std::to_string(len) + " exceeds series length " + std::to_string(x.size()));
  }
  if (cfg.classes < 2 || x.size() < static_cast<std::size_t>(cfg.classes)) {
    throw InvalidArgument("sample_piece_pair: need 2 <= classes <= series length");
  }
  const auto last = static_cast<std::int64_t>(x.size() - len);
  std::size_t u, v;
  if (cfg.stratified) {
    std::tie(u, v) = stratified_starts(x.size(), cfg.classes, len, rng);
  } else {
    u = static_cast<std::size_t>(rng.uniform_int(0, last));
    v = static_cast<std::size_t>(rng.uniform_int(0, last));
  }
  return piece_pair_at(x, len, cfg.classes, u, v);
}

std::vector<std::uint64_t> label_histogram(std::size_t length, int classes, std::size_t piece_length) {
  if (piece_length == 0 || piece_length > length) throw InvalidArgument("label_histogram: piece length out of range");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(std::max(classes, 0)), 0);
  const std::size_t positions = length - piece_length + 1;
  for (std::size_t u = 0; u < positions; ++u)
    for (std::size_t v = 0; v < positions; ++v) ++counts[temporal_label(length, classes, u, v)];
  return counts;
}

std::vector<std::uint32_t> random_partners(std::size_t count, RngStream& rng) {
  if (count < 2) throw InvalidArgument("negative pairs need a minibatch of at least 2 samples");
  std::vector<std::uint32_t> order(count);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::uint32_t> partner(count);
  for (std::size_t k = 0; k < count; ++k) partner[order[k]] = order[(k + 1) % count];
  return partner;
}

InterSampleBatch build_inter_batch(std::span<const Series> minibatch, int views_per_sample,
                                   const augment::AugmentationPolicy& policy, RngStream& rng,
                                   std::span<const std::uint64_t> sample_ids) {
  if (minibatch.size() < 2) {
    throw InvalidArgument("build_inter_batch: minibatch of size " + std::to_string(minibatch.size()) +
                          " has no negative partner");
  }
  if (views_per_sample < 1) throw InvalidArgument("build_inter_batch: K must be >= 1");
  if (!sample_ids.empty() && sample_ids.size() != minibatch.size()) {
    throw InvalidArgument("build_inter_batch: sample id count does not match minibatch");
  }
  const std::size_t n = minibatch.size();
  const auto k = static_cast<std::size_t>(views_per_sample);
  const std::size_t len = minibatch[0].size();
  for (const auto& s : minibatch)
    if (s.size() != len) throw InvalidArgument("build_inter_batch: series lengths differ");

  InterSampleBatch batch;
  batch.batch_size = n;
  batch.views_per_sample = k;
  batch.length = len;
  batch.views.resize(n * k * len);
  for (std::size_t m = 0; m < n; ++m) {
    const std::uint64_t id = sample_ids.empty() ? m : sample_ids[m];
    for (std::size_t i = 0; i < k; ++i) {
      RngStream stream = rng.child("view", {id, i});
      const auto view = augment::apply_policy(minibatch[m], policy, stream);
      std::copy(view.begin(), view.end(), batch.views.begin() + static_cast<std::ptrdiff_t>((m * k + i) * len));
    }
  }

  batch.partner_index = random_partners(n, rng);
  batch.anchor_index.resize(n);
  std::iota(batch.anchor_index.begin(), batch.anchor_index.end(), 0u);

  const std::size_t pairs = 2 * n * k * k;
  batch.left.reserve(pairs);
  batch.right.reserve(pairs);
  batch.labels.reserve(pairs);
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t partner = batch.partner_index[m];
    for (int polarity = 1; polarity >= 0; --polarity) {
      const std::size_t other = polarity ? m : partner;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          batch.left.push_back(static_cast<std::uint32_t>(m * k + i));
          batch.right.push_back(static_cast<std::uint32_t>(other * k + j));
          batch.labels.push_back(static_cast<float>(polarity));
        }
    }
  }
  return batch;
}

}  // namespace selftime::relation
