#include "selftime/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "selftime/errors.hpp"
#include "selftime/functional.hpp"
#include "selftime/relation.hpp"

namespace selftime::pipeline {

namespace {

constexpr const char* kArchitecture = "conv1d[1-8-16-32-64,k4s2p1]+bn+relu,avgpool,l2;heads[128-256-out]";

std::string fmt_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_real(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> shuffled(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with the stream's own uniform_int so the order is platform independent.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::size_t argmax_row(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void require_series_length(std::size_t length) {
  if (length < model::kMinInputLength) {
    throw InvalidArgument("series length " + std::to_string(length) + " is below the encoder minimum of " +
                          std::to_string(model::kMinInputLength));
  }
}

void require_labels(const TimeSeriesDataset& ds, const char* what) {
  if (!ds.has_labels()) throw InvalidArgument(std::string(what) + " needs a labeled dataset");
  if (ds.num_classes() < 2) throw InvalidArgument(std::string(what) + " needs at least 2 classes");
}

void check_label_set(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled) {
  if (auto n = ckpt.meta("num_labels"); n && std::stoi(*n) != labeled.num_classes()) {
    throw InvalidArgument("checkpoint was built for " + *n + " labels but the dataset has " +
                          std::to_string(labeled.num_classes()));
  }
}

void check_resume(const ModelCheckpoint& ckpt, const TrainConfig& cfg, std::size_t length) {
  auto expect = [&](const char* key, const std::string& want) {
    const auto got = ckpt.meta(key);
    if (!got || *got != want) {
      throw InvalidArgument(std::string("resume checkpoint mismatch on '") + key + "': checkpoint has '" +
                            got.value_or("<missing>") + "', run uses '" + want + "'");
    }
  };
  expect("C", std::to_string(cfg.C));
  expect("piece_ratio", fmt_real(cfg.piece_ratio));
  expect("K", std::to_string(cfg.K));
  expect("seed", std::to_string(cfg.seed));
  expect("series_length", std::to_string(length));
}

void fill_metadata(ModelCheckpoint& ckpt, const TrainConfig& cfg, std::size_t length, const std::string& dataset,
                   int epoch) {
  ckpt.metadata["architecture"] = kArchitecture;
  ckpt.metadata["C"] = std::to_string(cfg.C);
  ckpt.metadata["piece_ratio"] = fmt_real(cfg.piece_ratio);
  ckpt.metadata["K"] = std::to_string(cfg.K);
  ckpt.metadata["seed"] = std::to_string(cfg.seed);
  ckpt.metadata["dataset"] = dataset;
  ckpt.metadata["series_length"] = std::to_string(length);
  ckpt.metadata["epoch"] = std::to_string(epoch);
}

// Rows `index` of an N x dim feature matrix as a [n, dim] tensor.
nn::Tensor feature_rows(std::span<const float> features, std::size_t dim, std::span<const std::size_t> index) {
  std::vector<float> vals;
  vals.reserve(index.size() * dim);
  for (auto i : index) vals.insert(vals.end(), features.begin() + i * dim, features.begin() + (i + 1) * dim);
  return nn::Tensor({index.size(), dim}, std::move(vals));
}

double accuracy_of(const nn::Tensor& logits, std::span<const int> labels, std::span<const std::size_t> index) {
  if (index.empty()) return 0.0;
  const std::size_t classes = logits.dim(1);
  const auto data = logits.data();
  std::size_t hit = 0;
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (argmax_row(data.subspan(r * classes, classes)) == static_cast<std::size_t>(labels[index[r]])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(index.size());
}

std::vector<int> labels_at(std::span<const int> labels, std::span<const std::size_t> index) {
  std::vector<int> out;
  out.reserve(index.size());
  for (auto i : index) out.push_back(labels[i]);
  return out;
}

std::vector<double> rows_at(const TimeSeriesDataset& ds, std::span<const std::size_t> index) {
  std::vector<double> out;
  out.reserve(index.size() * ds.length);
  for (auto i : index) {
    auto r = ds.row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

std::uint64_t probe_seed(std::uint64_t split_seed, int trial) {
  return derive_stream("probe", {split_seed, static_cast<std::uint64_t>(trial)});
}

EvalReport eval_on_splits(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg,
                          int trials, std::span<const std::uint64_t> seeds, std::span<const DataSplit> splits,
                          std::string method) {
  require_labels(labeled, "linear evaluation");
  require_series_length(labeled.length);
  check_label_set(ckpt, labeled);
  if (trials < 1) throw InvalidArgument("linear evaluation needs at least one trial");
  auto encoder = load_encoder(ckpt);
  const auto features = encode_dataset(encoder, labeled);
  std::vector<double> acc(splits.size() * static_cast<std::size_t>(trials));
  parallel_for(acc.size(), cfg.jobs, [&](std::size_t i) {
    const std::size_t s = i / static_cast<std::size_t>(trials);
    const int t = static_cast<int>(i % static_cast<std::size_t>(trials));
    acc[i] = probe_accuracy(features, model::kEmbeddingDim, labeled.labels, labeled.num_classes(), splits[s], cfg,
                            probe_seed(seeds[s], t));
  });
  return summarize(std::move(method), std::move(acc), {seeds.begin(), seeds.end()});
}

}  // namespace

DataSplit split_dataset(const TimeSeriesDataset& ds, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 8) throw InvalidArgument("split_dataset needs at least 8 series, got " + std::to_string(n));
  RngStream rng(seed, derive_stream("split", {}));
  std::vector<std::size_t> order;
  if (!ds.has_labels()) {
    order = shuffled(n, rng);
  } else {
    // Each class is shuffled, then classes are interleaved by relative rank so
    // that every prefix of `order` holds the classes in proportion.
    const int classes = ds.num_classes();
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    const auto class_rank = shuffled(static_cast<std::size_t>(classes), rng);
    struct Keyed {
      double key;
      std::size_t rank;
      std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(n);
    for (std::size_t c = 0; c < members.size(); ++c) {
      auto& m = members[c];
      const auto perm = shuffled(m.size(), rng);
      for (std::size_t k = 0; k < m.size(); ++k) {
        keyed.push_back({(static_cast<double>(k) + 0.5) / static_cast<double>(m.size()), class_rank[c], m[perm[k]]});
      }
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
      return a.key != b.key ? a.key < b.key : a.rank < b.rank;
    });
    for (const auto& k : keyed) order.push_back(k.index);
  }
  const std::size_t n_train = n / 2, n_val = n / 4;
  DataSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                          order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return split;
}

std::vector<std::uint64_t> split_seeds(const TrainConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.splits; ++i) seeds.push_back(derive_stream("split-seed", {cfg.seed, static_cast<std::uint64_t>(i)}));
  return seeds;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
  RngStream rng(seed, derive_stream("shuffle", {epoch}));
  const auto order = shuffled(count, rng);
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t b = 0; b < count; b += bs) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, b + bs)));
  }
  // Batch-norm statistics and negative pairs both need two samples.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

model::LossReport pretrain_step(model::SelfTimeModel& model, nn::Adam<float>& optimizer, const TimeSeriesDataset& ds,
                                std::span<const std::size_t> ids, const TrainConfig& cfg, std::uint64_t epoch,
                                std::uint64_t step) {
  if (ids.size() < 2) throw InvalidArgument("a pretraining step needs at least 2 series");
  relation::TemporalRelationConfig rcfg{cfg.C, cfg.piece_ratio, 1, cfg.stratified_pieces};
  RngStream step_rng = RngStream(cfg.seed, derive_stream("epoch", {epoch})).child("step", {step});

  std::vector<augment::Series> minibatch;
  std::vector<std::uint64_t> sample_ids;
  std::vector<relation::PiecePair> pairs;
  for (auto id : ids) {
    auto row = ds.row(id);
    minibatch.emplace_back(row.begin(), row.end());
    sample_ids.push_back(id);
    for (int p = 0; p < cfg.piece_pairs; ++p) {
      RngStream piece_rng(cfg.seed, derive_stream("piece", {epoch, id, static_cast<std::uint64_t>(p)}));
      pairs.push_back(relation::sample_piece_pair(row, rcfg, piece_rng));
    }
  }
  const auto batch = relation::build_inter_batch(minibatch, cfg.K, cfg.policy, step_rng, sample_ids);

  optimizer.zero_grad();
  auto out = model::selftime_loss(model, batch, pairs, true);
  nn::backward(out.loss);
  optimizer.step();
  return out.report;
}

ModelCheckpoint initial_checkpoint(const TrainConfig& cfg, std::size_t series_length, const std::string& dataset) {
  model::SelfTimeModel model(cfg.C, cfg.seed);
  nn::Adam<float> optimizer(model.parameters(), {cfg.lr_pretrain});
  ModelCheckpoint ckpt;
  fill_metadata(ckpt, cfg, series_length, dataset, 0);
  io::store_model(ckpt, model);
  io::store_optimizer(ckpt, model, optimizer.state());
  return ckpt;
}

PretrainResult pretrain(const TimeSeriesDataset& unlabeled, const TrainConfig& cfg, const PretrainOptions& options) {
  cfg.validate();
  unlabeled.validate();
  const std::size_t n = unlabeled.size(), length = unlabeled.length;
  if (n < 2) throw InvalidArgument("pretraining needs at least 2 series, got " + std::to_string(n));
  require_series_length(length);
  const relation::TemporalRelationConfig rcfg{cfg.C, cfg.piece_ratio, cfg.piece_pairs, cfg.stratified_pieces};
  const std::size_t piece = rcfg.piece_length(length);
  if (piece < model::kMinInputLength) {
    const double needed = static_cast<double>(model::kMinInputLength) / static_cast<double>(length);
    throw InvalidArgument("piece length round(piece_ratio * T) = " + std::to_string(piece) + " (piece_ratio " +
                          fmt_real(cfg.piece_ratio) + ", T " + std::to_string(length) +
                          ") is below the encoder minimum of 16; raise piece_ratio to at least " + fmt_real(needed) +
                          " or use longer series");
  }
  if (static_cast<std::size_t>(cfg.C) > length) {
    throw InvalidArgument("C = " + std::to_string(cfg.C) + " temporal classes exceed the series length " +
                          std::to_string(length));
  }

  model::SelfTimeModel model(cfg.C, cfg.seed);
  nn::Adam<float> optimizer(model.parameters(), {cfg.lr_pretrain});
  int start_epoch = 0;
  if (options.resume) {
    check_resume(*options.resume, cfg, length);
    io::restore_model(*options.resume, model);
    io::restore_optimizer(*options.resume, model, optimizer.state());
    start_epoch = std::stoi(options.resume->meta("epoch").value_or("0"));
    if (start_epoch > cfg.epochs) {
      throw InvalidArgument("resume checkpoint is at epoch " + std::to_string(start_epoch) + ", past the requested " +
                            std::to_string(cfg.epochs));
    }
  }

  PretrainResult result;
  for (int e = start_epoch; e < cfg.epochs; ++e) {
    const auto epoch = static_cast<std::uint64_t>(e);
    const auto batches = epoch_batches(n, cfg.batch_size, cfg.seed, epoch);
    EpochLog row;
    row.epoch = e + 1;
    for (std::size_t s = 0; s < batches.size(); ++s) {
      const auto rep = pretrain_step(model, optimizer, unlabeled, batches[s], cfg, epoch, s);
      row.loss_inter += rep.loss_inter;
      row.loss_intra += rep.loss_intra;
      row.loss_total += rep.loss_total;
      row.inter_acc += rep.inter_accuracy;
      row.class_acc += rep.intra_accuracy;
      result.work.steps += 1;
      result.work.inter_scores += rep.inter_scores;
      result.work.intra_scores += rep.intra_scores;
    }
    const auto steps = static_cast<double>(batches.size());
    row.loss_inter /= steps;
    row.loss_intra /= steps;
    row.loss_total /= steps;
    row.inter_acc /= steps;
    row.class_acc /= steps;
    result.log.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
  }

  fill_metadata(result.checkpoint, cfg, length, unlabeled.name, std::max(cfg.epochs, start_epoch));
  io::store_model(result.checkpoint, model);
  io::store_optimizer(result.checkpoint, model, optimizer.state());
  return result;
}

EvalReport summarize(std::string method, std::vector<double> accuracies, std::vector<std::uint64_t> seeds,
                     std::uint64_t pretext_steps) {
  for (double a : accuracies)
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("summarize: accuracy outside [0, 1]");
  EvalReport r;
  r.method = std::move(method);
  r.accuracies = std::move(accuracies);
  r.split_seeds = std::move(seeds);
  r.trial_count = static_cast<int>(r.accuracies.size());
  r.pretext_steps = pretext_steps;
  if (!r.accuracies.empty()) {
    const double n = static_cast<double>(r.accuracies.size());
    r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
    r.std = std::sqrt(ss / n);
  }
  return r;
}

model::Encoder load_encoder(const ModelCheckpoint& ckpt) {
  RngStream unused(0, 0);
  model::Encoder encoder(unused);
  io::restore_encoder(ckpt, encoder);
  return encoder;
}

std::vector<float> encode_dataset(model::Encoder& encoder, const TimeSeriesDataset& ds) {
  require_series_length(ds.length);
  nn::NoGradGuard guard;
  constexpr std::size_t kChunk = 256;
  std::vector<float> out;
  out.reserve(ds.size() * model::kEmbeddingDim);
  for (std::size_t b = 0; b < ds.size(); b += kChunk) {
    const std::size_t rows = std::min(kChunk, ds.size() - b);
    auto values = std::span<const double>(ds.values).subspan(b * ds.length, rows * ds.length);
    auto z = encoder.encode(model::series_batch<float>(values, rows, ds.length), false);
    out.insert(out.end(), z.data().begin(), z.data().end());
  }
  return out;
}

double probe_accuracy(std::span<const float> features, std::size_t dim, std::span<const int> labels, int classes,
                      const DataSplit& split, const TrainConfig& cfg, std::uint64_t seed) {
  if (split.train.empty()) throw InvalidArgument("linear probe needs training rows");
  RngStream init(cfg.seed, derive_stream("probe-init", {seed}));
  const double bound = std::sqrt(1.0 / static_cast<double>(dim));
  std::vector<float> w(static_cast<std::size_t>(classes) * dim), b(static_cast<std::size_t>(classes));
  for (auto& x : w) x = static_cast<float>((2.0 * init.uniform01() - 1.0) * bound);
  for (auto& x : b) x = static_cast<float>((2.0 * init.uniform01() - 1.0) * bound);
  nn::Tensor weight({static_cast<std::size_t>(classes), dim}, std::move(w), true);
  nn::Tensor bias({static_cast<std::size_t>(classes)}, std::move(b), true);
  nn::Adam<float> optimizer({weight, bias}, {cfg.lr_linear});

  const auto train_x = feature_rows(features, dim, split.train);
  const auto train_y = labels_at(labels, split.train);
  const auto val_x = feature_rows(features, dim, split.validation);
  const auto test_x = feature_rows(features, dim, split.test);

  double best_val = -1.0, test_at_best = 0.0;
  for (int e = 0; e < cfg.eval_epochs; ++e) {
    const auto batches = epoch_batches(split.train.size(), cfg.batch_size, seed, static_cast<std::uint64_t>(e));
    for (const auto& batch : batches) {
      std::vector<std::uint32_t> rows(batch.begin(), batch.end());
      std::vector<int> y;
      for (auto r : batch) y.push_back(train_y[r]);
      optimizer.zero_grad();
      auto logits = nn::linear(nn::gather_rows(train_x, std::span<const std::uint32_t>(rows)), weight, bias);
      nn::backward(nn::ce_loss(logits, std::span<const int>(y)));
      optimizer.step();
    }
    nn::NoGradGuard guard;
    const double val = split.validation.empty() ? 0.0 : accuracy_of(nn::linear(val_x, weight, bias), labels, split.validation);
    if (val > best_val) {
      best_val = val;
      test_at_best = accuracy_of(nn::linear(test_x, weight, bias), labels, split.test);
    }
  }
  return test_at_best;
}

EvalReport linear_eval(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg, int trials) {
  const auto seeds = split_seeds(cfg);
  return linear_eval(ckpt, labeled, cfg, trials, seeds);
}

EvalReport linear_eval(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg, int trials,
                       std::span<const std::uint64_t> seeds) {
  require_labels(labeled, "linear evaluation");
  std::vector<DataSplit> splits;
  for (auto s : seeds) splits.push_back(split_dataset(labeled, s));
  return eval_on_splits(ckpt, labeled, cfg, trials, seeds, splits, "linear");
}

EvalReport linear_eval(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg, int trials,
                       std::span<const std::uint64_t> seeds, std::span<const DataSplit> splits) {
  if (seeds.size() != splits.size()) throw InvalidArgument("one seed per split is required");
  return eval_on_splits(ckpt, labeled, cfg, trials, seeds, splits, "linear");
}

DataSplit archive_split(const TimeSeriesDataset& ds, std::size_t train_rows, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (train_rows < 1 || train_rows + 2 > n) {
    throw InvalidArgument("archive split needs at least one train row and two held-out rows");
  }
  DataSplit split;
  for (std::size_t i = 0; i < train_rows; ++i) split.train.push_back(i);
  RngStream rng(seed, derive_stream("archive-split", {}));
  std::vector<std::size_t> held(n - train_rows);
  std::iota(held.begin(), held.end(), train_rows);
  const auto perm = shuffled(held.size(), rng);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    (k < perm.size() / 2 ? split.validation : split.test).push_back(held[perm[k]]);
  }
  return split;
}

EvalReport transfer_eval(const ModelCheckpoint& source, const TimeSeriesDataset& target, const TrainConfig& cfg) {
  require_series_length(target.length);
  auto r = linear_eval(source, target, cfg, cfg.trials);
  r.method = "transfer";
  return r;
}

EvalReport evaluate_selftime(const TimeSeriesDataset& labeled, const TrainConfig& cfg) {
  require_labels(labeled, "evaluate_selftime");
  const auto seeds = split_seeds(cfg);
  std::vector<std::vector<double>> per_split(seeds.size());
  std::vector<std::uint64_t> steps(seeds.size());
  std::vector<std::vector<EpochLog>> logs(seeds.size());
  TrainConfig inner = cfg;
  inner.jobs = 1;
  parallel_for(seeds.size(), cfg.jobs, [&](std::size_t i) {
    const auto split = split_dataset(labeled, seeds[i]);
    TrainConfig pcfg = inner;
    pcfg.seed = mix64(seeds[i]);
    const auto pre = pretrain(labeled.subset(split.train).without_labels(), pcfg);
    const std::array<DataSplit, 1> one{split};
    const std::array<std::uint64_t, 1> seed{seeds[i]};
    per_split[i] = eval_on_splits(pre.checkpoint, labeled, inner, cfg.trials, seed, one, "selftime").accuracies;
    steps[i] = pre.work.steps;
    logs[i] = pre.log;
  });
  std::vector<double> acc;
  for (auto& v : per_split) acc.insert(acc.end(), v.begin(), v.end());
  auto report =
      summarize("selftime", std::move(acc), seeds, std::accumulate(steps.begin(), steps.end(), std::uint64_t{0}));
  report.pretrain_logs = std::move(logs);
  return report;
}

EvalReport baseline_random_weights(const TimeSeriesDataset& labeled, const TrainConfig& cfg) {
  require_labels(labeled, "baseline_random_weights");
  const auto seeds = split_seeds(cfg);
  std::vector<double> acc;
  for (auto s : seeds) {
    TrainConfig pcfg = cfg;
    // Same initialisation the selftime protocol starts from on this split.
    pcfg.seed = mix64(s);
    const auto ckpt = initial_checkpoint(pcfg, labeled.length, labeled.name);
    const std::array<DataSplit, 1> one{split_dataset(labeled, s)};
    const std::array<std::uint64_t, 1> seed{s};
    const auto r = eval_on_splits(ckpt, labeled, cfg, cfg.trials, seed, one, "random_weights");
    acc.insert(acc.end(), r.accuracies.begin(), r.accuracies.end());
  }
  return summarize("random_weights", std::move(acc), seeds, 0);
}

EvalReport baseline_supervised(const TimeSeriesDataset& labeled, const TrainConfig& cfg) {
  require_labels(labeled, "baseline_supervised");
  require_series_length(labeled.length);
  cfg.validate();
  const auto seeds = split_seeds(cfg);
  const int classes = labeled.num_classes();
  const auto trials = static_cast<std::size_t>(cfg.trials);
  std::vector<double> acc(seeds.size() * trials);
  parallel_for(acc.size(), cfg.jobs, [&](std::size_t i) {
    const std::uint64_t split_seed = seeds[i / trials];
    const int trial = static_cast<int>(i % trials);
    const auto split = split_dataset(labeled, split_seed);
    const std::uint64_t seed = probe_seed(split_seed, trial);
    RngStream init(cfg.seed, derive_stream("supervised-init", {seed}));
    model::Encoder encoder(init);
    const double bound = std::sqrt(1.0 / static_cast<double>(model::kEmbeddingDim));
    std::vector<float> w(static_cast<std::size_t>(classes) * model::kEmbeddingDim), b(static_cast<std::size_t>(classes));
    for (auto& x : w) x = static_cast<float>((2.0 * init.uniform01() - 1.0) * bound);
    for (auto& x : b) x = static_cast<float>((2.0 * init.uniform01() - 1.0) * bound);
    nn::Tensor weight({static_cast<std::size_t>(classes), model::kEmbeddingDim}, std::move(w), true);
    nn::Tensor bias({static_cast<std::size_t>(classes)}, std::move(b), true);
    std::vector<nn::Tensor> params;
    for (auto& [name, t] : encoder.named_parameters()) params.push_back(t);
    params.push_back(weight);
    params.push_back(bias);
    nn::Adam<float> optimizer(params, {cfg.lr_pretrain});

    const auto val_x = model::series_batch<float>(rows_at(labeled, split.validation), split.validation.size(), labeled.length);
    const auto test_x = model::series_batch<float>(rows_at(labeled, split.test), split.test.size(), labeled.length);
    double best_val = -1.0, test_at_best = 0.0;
    for (int e = 0; e < cfg.epochs; ++e) {
      for (const auto& batch : epoch_batches(split.train.size(), cfg.batch_size, seed, static_cast<std::uint64_t>(e))) {
        std::vector<std::size_t> rows;
        for (auto r : batch) rows.push_back(split.train[r]);
        const auto x = model::series_batch<float>(rows_at(labeled, rows), rows.size(), labeled.length);
        const auto y = labels_at(labeled.labels, rows);
        optimizer.zero_grad();
        auto logits = nn::linear(encoder.encode(x, true), weight, bias);
        auto loss = nn::ce_loss(logits, std::span<const int>(y));
        if (!std::isfinite(loss.item())) throw NumericError("supervised baseline: non-finite loss");
        nn::backward(loss);
        optimizer.step();
      }
      nn::NoGradGuard guard;
      const double val = accuracy_of(nn::linear(encoder.encode(val_x, false), weight, bias), labeled.labels, split.validation);
      if (val > best_val) {
        best_val = val;
        test_at_best = accuracy_of(nn::linear(encoder.encode(test_x, false), weight, bias), labeled.labels, split.test);
      }
    }
    acc[i] = test_at_best;
  });
  return summarize("supervised", std::move(acc), seeds, 0);
}

std::vector<SweepRow> sweep(const TimeSeriesDataset& unlabeled, const TimeSeriesDataset& labeled,
                            std::span<const int> class_grid, std::span<const double> ratio_grid, const TrainConfig& cfg) {
  if (class_grid.empty() || ratio_grid.empty()) throw InvalidArgument("sweep grids must be non-empty");
  std::vector<SweepRow> rows;
  for (int c : class_grid) {
    for (double r : ratio_grid) {
      SweepRow row;
      row.classes = c;
      row.piece_ratio = r;
      rows.push_back(row);
    }
  }
  TrainConfig inner = cfg;
  inner.jobs = 1;
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t i) {
    auto& row = rows[i];
    TrainConfig cell = inner;
    cell.C = row.classes;
    cell.piece_ratio = row.piece_ratio;
    try {
      cell.validate();
      row.piece_length = relation::TemporalRelationConfig{cell.C, cell.piece_ratio}.piece_length(unlabeled.length);
      const auto pre = pretrain(unlabeled, cell);
      row.class_acc = pre.log.empty() ? 0.0 : pre.log.back().class_acc;
      const auto rep = linear_eval(pre.checkpoint, labeled, cell, cell.trials);
      row.linear_acc_mean = rep.mean;
      row.linear_acc_std = rep.std;
    } catch (const InvalidArgument& e) {
      row.skipped = true;
      row.reason = e.what();
    } catch (const ConfigError& e) {
      row.skipped = true;
      row.reason = e.what();
    }
  });
  return rows;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_epoch_header(std::ostream& out) { out << "epoch,loss_inter,loss_intra,loss_total,inter_acc,class_acc\n"; }

void write_epoch_row(std::ostream& out, const EpochLog& row) {
  out << row.epoch << ',' << fmt_real(row.loss_inter) << ',' << fmt_real(row.loss_intra) << ','
      << fmt_real(row.loss_total) << ',' << fmt_real(row.inter_acc) << ',' << fmt_real(row.class_acc) << '\n';
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "method,split_index,split_seed,trial,accuracy\n";
  const std::size_t splits = std::max<std::size_t>(1, report.split_seeds.size());
  const std::size_t per_split = report.accuracies.size() / splits;
  for (std::size_t i = 0; i < report.accuracies.size(); ++i) {
    const std::size_t s = per_split ? i / per_split : 0;
    out << report.method << ',' << s << ',' << (s < report.split_seeds.size() ? report.split_seeds[s] : 0) << ','
        << (per_split ? i % per_split : i) << ',' << fmt_real(report.accuracies[i]) << '\n';
  }
}

std::string report_summary(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << report.method << ": " << 100.0 * report.mean << " +- " << 100.0 * report.std << " % over "
     << report.trial_count << " trials (" << report.split_seeds.size()
     << " splits; population std; pretext steps " << report.pretext_steps << ")";
  return os.str();
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "C,piece_ratio,piece_length,class_acc,linear_acc_mean,linear_acc_std,status\n";
  for (const auto& r : rows) {
    out << r.classes << ',' << fmt_real(r.piece_ratio) << ',' << r.piece_length << ',';
    if (r.skipped) {
      out << ",,,skipped\n";
    } else {
      out << fmt_real(r.class_acc) << ',' << fmt_real(r.linear_acc_mean) << ',' << fmt_real(r.linear_acc_std)
          << ",ok\n";
    }
  }
}

void write_embeddings(std::ostream& out, const ModelCheckpoint& ckpt, const TimeSeriesDataset& ds) {
  auto encoder = load_encoder(ckpt);
  const auto features = encode_dataset(encoder, ds);
  out << "id,label";
  for (std::size_t f = 0; f < model::kEmbeddingDim; ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << i << ',' << (ds.has_labels() ? ds.label_map[static_cast<std::size_t>(ds.labels[i])] : std::string("NA"));
    for (std::size_t f = 0; f < model::kEmbeddingDim; ++f) out << ',' << fmt_real(features[i * model::kEmbeddingDim + f]);
    out << '\n';
  }
}

void export_embeddings(const ModelCheckpoint& ckpt, const TimeSeriesDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embeddings to " + path.string());
  write_embeddings(out, ckpt, ds);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace selftime::pipeline
