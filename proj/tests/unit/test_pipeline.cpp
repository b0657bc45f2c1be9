#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "selftime/errors.hpp"
#include "selftime/pipeline.hpp"
#include "selftime/synthetic.hpp"

using namespace selftime;
using namespace selftime::pipeline;

namespace {

data::TimeSeriesDataset small_waves(std::size_t count = 48, std::size_t length = 32, std::uint64_t seed = 3) {
  data::WaveformOptions o;
  o.count = count;
  o.length = length;
  o.seed = seed;
  return data::znormalize(data::make_waveforms(o));
}

TrainConfig quick() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.K = 2;
  cfg.C = 2;
  cfg.piece_ratio = 0.5;
  cfg.eval_epochs = 20;
  cfg.trials = 2;
  cfg.splits = 2;
  cfg.seed = 5;
  return cfg;
}

bool same_entries(const ModelCheckpoint& a, const ModelCheckpoint& b, const std::string& prefix) {
  std::size_t seen = 0;
  for (const auto& e : a.entries) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    const auto* o = b.find(e.name);
    if (!o || !(*o == e)) return false;
    ++seen;
  }
  return seen > 0;
}

}  // namespace

TEST_CASE("split_dataset") {
  std::vector<double> v(160 * 16, 0.0);
  std::vector<int> labels(160);
  for (std::size_t i = 0; i < 160; ++i) labels[i] = static_cast<int>(i % 4);
  const auto ds = data::from_rows(v, 16, labels);
  const auto s = split_dataset(ds, 9);
  CHECK(s.train.size() == 80);
  CHECK(s.validation.size() == 40);
  CHECK(s.test.size() == 40);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 160);
  CHECK(*all.rbegin() == 159);
  const auto again = split_dataset(ds, 9);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(split_dataset(ds, 10).train != s.train);
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    std::set<int> classes;
    for (auto i : *part) classes.insert(labels[i]);
    CHECK(classes.size() == 4);
  }
  SUBCASE("odd sizes and unlabeled data") {
    const auto u = data::from_rows(std::vector<double>(13 * 16, 0.0), 16);
    const auto p = split_dataset(u, 1);
    CHECK(p.train.size() == 6);
    CHECK(p.validation.size() == 3);
    CHECK(p.test.size() == 4);
  }
  CHECK_THROWS_AS(split_dataset(data::from_rows(std::vector<double>(7 * 16, 0.0), 16), 1), InvalidArgument);
}

TEST_CASE("epoch_batches") {
  const auto b = epoch_batches(129, 128, 1, 0);
  REQUIRE(b.size() == 1);
  CHECK(b[0].size() == 129);
  const auto c = epoch_batches(100, 32, 1, 3);
  CHECK(c.size() == 4);
  std::vector<std::size_t> flat;
  for (const auto& x : c) flat.insert(flat.end(), x.begin(), x.end());
  std::sort(flat.begin(), flat.end());
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == i);
  CHECK(epoch_batches(100, 32, 1, 3) == c);
  CHECK(epoch_batches(100, 32, 1, 4) != c);
}

TEST_CASE("pretrain bookkeeping") {
  const auto ds = small_waves().without_labels();
  auto cfg = quick();
  SUBCASE("zero epochs returns the initialisation") {
    cfg.epochs = 0;
    const auto r = pretrain(ds, cfg);
    const auto init = initial_checkpoint(cfg, ds.length);
    CHECK(same_entries(init, r.checkpoint, "backbone."));
    CHECK(same_entries(init, r.checkpoint, "head_"));
    CHECK(r.log.empty());
    CHECK(r.work.steps == 0);
  }
  SUBCASE("counters and log") {
    std::vector<int> seen;
    PretrainOptions opt;
    opt.on_epoch = [&](const EpochLog& e) { seen.push_back(e.epoch); };
    const auto r = pretrain(ds, cfg, opt);
    CHECK(seen == std::vector<int>{1, 2});
    CHECK(r.log.size() == 2);
    CHECK(r.work.steps == 6);
    CHECK(r.work.intra_scores == 2 * 48);
    CHECK(r.work.inter_scores == 2 * 2 * 48 * 2 * 2);
    for (const auto& e : r.log) {
      CHECK(std::isfinite(e.loss_total));
      CHECK(e.loss_total == doctest::Approx(e.loss_inter + e.loss_intra));
    }
    CHECK(r.checkpoint.meta("epoch") == std::optional<std::string>("2"));
  }
  SUBCASE("same seed, same checkpoint") {
    const auto a = pretrain(ds, cfg), b = pretrain(ds, cfg);
    CHECK(io::checkpoint_hash(a.checkpoint) == io::checkpoint_hash(b.checkpoint));
    cfg.seed = 6;
    CHECK(io::checkpoint_hash(pretrain(ds, cfg).checkpoint) != io::checkpoint_hash(a.checkpoint));
  }
  SUBCASE("resume continues the same trajectory") {
    cfg.epochs = 3;
    const auto full = pretrain(ds, cfg);
    auto first = cfg;
    first.epochs = 1;
    const auto part = pretrain(ds, first);
    PretrainOptions opt;
    opt.resume = &part.checkpoint;
    const auto resumed = pretrain(ds, cfg, opt);
    CHECK(resumed.log.size() == 2);
    CHECK(io::checkpoint_hash(resumed.checkpoint) == io::checkpoint_hash(full.checkpoint));
    auto other = cfg;
    other.C = 3;
    CHECK_THROWS_AS(pretrain(ds, other, opt), InvalidArgument);
  }
  SUBCASE("piece shorter than 16 is rejected with a hint") {
    cfg.piece_ratio = 0.2;
    try {
      pretrain(ds, cfg);
      FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("piece_ratio") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(pretrain(data::from_rows(std::vector<double>(20 * 8, 1.0), 8), quick()), InvalidArgument);
}

TEST_CASE("summarize") {
  const auto r = summarize("m", {0.5, 0.7, 0.9, 1.0}, {1, 2});
  CHECK(std::abs(r.mean - 0.775) < 1e-9);
  const double var = (0.275 * 0.275 + 0.075 * 0.075 + 0.125 * 0.125 + 0.225 * 0.225) / 4;
  CHECK(std::abs(r.std - std::sqrt(var)) < 1e-9);
  CHECK(r.trial_count == 4);
  CHECK(report_summary(r).find("population std") != std::string::npos);
  CHECK_THROWS_AS(summarize("m", {1.5}, {1}), InvalidArgument);
}

TEST_CASE("probe on one-hot features is perfect") {
  const std::size_t n = 40, classes = 4;
  std::vector<float> f(n * 64, 0.0f);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % classes);
    f[i * 64 + i % classes] = 1.0f;
  }
  DataSplit split;
  for (std::size_t i = 0; i < n; ++i) (i < 20 ? split.train : i < 30 ? split.validation : split.test).push_back(i);
  auto cfg = quick();
  cfg.eval_epochs = 50;
  CHECK(probe_accuracy(f, 64, labels, static_cast<int>(classes), split, cfg, 1) == 1.0);
}

TEST_CASE("linear evaluation contracts") {
  const auto ds = small_waves();
  auto cfg = quick();
  const auto ckpt = pretrain(ds.without_labels(), cfg).checkpoint;
  const auto before = io::checkpoint_hash(ckpt);
  auto encoder = load_encoder(ckpt);
  std::vector<std::vector<float>> snapshot;
  for (auto& [name, t] : encoder.named_parameters()) snapshot.emplace_back(t.data().begin(), t.data().end());

  const auto rep = linear_eval(ckpt, ds, cfg, 2);
  CHECK(io::checkpoint_hash(ckpt) == before);
  CHECK(rep.accuracies.size() == 4);
  CHECK(rep.split_seeds == split_seeds(cfg));
  for (double a : rep.accuracies) CHECK((a >= 0.0 && a <= 1.0));

  encode_dataset(encoder, ds);
  std::size_t k = 0;
  for (auto& [name, t] : encoder.named_parameters()) CHECK(std::equal(t.data().begin(), t.data().end(), snapshot[k++].begin()));

  SUBCASE("transfer with source = target is linear_eval") {
    const auto t = transfer_eval(ckpt, ds, cfg);
    CHECK(t.accuracies == linear_eval(ckpt, ds, cfg, cfg.trials).accuracies);
  }
  SUBCASE("label count must match the checkpoint") {
    auto tagged = ckpt;
    tagged.metadata["num_labels"] = "5";
    CHECK_THROWS_AS(linear_eval(tagged, ds, cfg, 1), InvalidArgument);
  }
  SUBCASE("unlabeled data is rejected") {
    CHECK_THROWS_AS(linear_eval(ckpt, ds.without_labels(), cfg, 1), InvalidArgument);
  }
}

TEST_CASE("baselines") {
  const auto ds = small_waves(60, 32, 8);
  auto cfg = quick();
  cfg.eval_epochs = 60;
  const auto r1 = baseline_random_weights(ds, cfg), r2 = baseline_random_weights(ds, cfg);
  CHECK(r1.accuracies == r2.accuracies);
  CHECK(r1.pretext_steps == 0);
  const auto s = evaluate_selftime(ds, cfg);
  CHECK(s.pretext_steps > r1.pretext_steps);
}

TEST_CASE("supervised baseline on separable data") {
  // Class 0 rises, class 1 falls; noise keeps the rows distinct.
  RngStream rng(4, 0);
  std::vector<double> v;
  std::vector<int> labels;
  for (int i = 0; i < 48; ++i) {
    const double dir = i % 2 ? -1.0 : 1.0;
    for (int t = 0; t < 32; ++t) v.push_back(dir * (t - 15.5) / 16.0 + 0.1 * rng.normal(0, 1));
    labels.push_back(i % 2);
  }
  const auto ds = data::from_rows(v, 32, labels);
  auto cfg = quick();
  cfg.epochs = 15;
  cfg.trials = 1;
  const auto a = baseline_supervised(ds, cfg);
  CHECK(a.mean >= 0.95);
  CHECK(baseline_supervised(ds, cfg).accuracies == a.accuracies);
  CHECK_THROWS_AS(baseline_supervised(ds.without_labels(), cfg), InvalidArgument);
}

TEST_CASE("sweep") {
  const auto ds = small_waves();
  auto cfg = quick();
  cfg.epochs = 1;
  cfg.trials = 1;
  cfg.splits = 1;
  const std::vector<int> classes{2, 3};
  const std::vector<double> ratios{0.5, 0.25};
  const auto rows = sweep(ds.without_labels(), ds, classes, ratios, cfg);
  CHECK(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.skipped == (r.piece_ratio == 0.25));
  CHECK(rows[0].piece_length == 16);

  SUBCASE("single cell equals pretrain then linear_eval") {
    const std::vector<int> c{2};
    const std::vector<double> r{0.5};
    const auto one = sweep(ds.without_labels(), ds, c, r, cfg);
    const auto direct = linear_eval(pretrain(ds.without_labels(), cfg).checkpoint, ds, cfg, cfg.trials);
    CHECK(one.at(0).linear_acc_mean == direct.mean);
  }
  std::ostringstream out;
  write_sweep_csv(out, rows);
  const auto csv = out.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("skipped") != std::string::npos);
  CHECK_THROWS_AS(sweep(ds, ds, std::vector<int>{}, ratios, cfg), InvalidArgument);
}

TEST_CASE("parallel trials match serial ones") {
  const auto ds = small_waves();
  auto cfg = quick();
  const auto ckpt = initial_checkpoint(cfg, ds.length);
  auto par = cfg;
  par.jobs = 3;
  CHECK(linear_eval(ckpt, ds, cfg, 2).accuracies == linear_eval(ckpt, ds, par, 2).accuracies);
}

TEST_CASE("embeddings csv") {
  const auto ds = small_waves(12);
  const auto ckpt = initial_checkpoint(quick(), ds.length);
  for (bool labeled : {true, false}) {
    std::ostringstream out;
    write_embeddings(out, ckpt, labeled ? ds : ds.without_labels());
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("id,label,f0,", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 65);
      std::istringstream cells(line);
      std::string cell;
      std::getline(cells, cell, ',');
      std::getline(cells, cell, ',');
      if (!labeled) CHECK(cell == "NA");
      double norm = 0;
      while (std::getline(cells, cell, ',')) norm += std::stod(cell) * std::stod(cell);
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-5);
    }
    CHECK(rows == 12);
  }
}

TEST_CASE("epoch log format") {
  std::ostringstream out;
  write_epoch_header(out);
  write_epoch_row(out, EpochLog{3, 0.5, 0.25, 0.75, 0.9, 0.6});
  CHECK(out.str().rfind("epoch,loss_inter,loss_intra,loss_total,inter_acc,class_acc\n3,", 0) == 0);
}
