#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "selftime/checkpoint.hpp"
#include "selftime/config.hpp"
#include "selftime/dataset.hpp"
#include "selftime/model.hpp"
#include "selftime/optim.hpp"

namespace selftime::pipeline {

using data::TimeSeriesDataset;
using io::ModelCheckpoint;

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// 50/25/25 split: floor(N/2) train, floor(N/4) validation, the rest test.
// Stratified by label when labels exist. Deterministic in the seed.
DataSplit split_dataset(const TimeSeriesDataset& ds, std::uint64_t seed);

// Seeds of the cfg.splits random splits derived from cfg.seed.
std::vector<std::uint64_t> split_seeds(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;  // 1-based
  double loss_inter = 0.0;
  double loss_intra = 0.0;
  double loss_total = 0.0;
  double inter_acc = 0.0;
  double class_acc = 0.0;
};

struct WorkCounters {
  std::uint64_t steps = 0;
  std::uint64_t inter_scores = 0;
  std::uint64_t intra_scores = 0;
};

struct PretrainOptions {
  // Continue from a checkpoint written by pretrain (weights, optimizer, epoch).
  const ModelCheckpoint* resume = nullptr;
  std::function<void(const EpochLog&)> on_epoch;
};

struct PretrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochLog> log;
  WorkCounters work;
};

// Joint inter-sample / intra-temporal pretraining for cfg.epochs epochs.
// The returned checkpoint keeps both relation heads and the optimizer state
// so a run can be resumed; evaluation only reads the backbone.
PretrainResult pretrain(const TimeSeriesDataset& unlabeled, const TrainConfig& cfg, const PretrainOptions& options = {});

// One optimisation step on the minibatch `ids` (dataset row indices).
model::LossReport pretrain_step(model::SelfTimeModel& model, nn::Adam<float>& optimizer, const TimeSeriesDataset& ds,
                                std::span<const std::size_t> ids, const TrainConfig& cfg, std::uint64_t epoch,
                                std::uint64_t step);

// Minibatches of one epoch: a seeded shuffle cut into batch_size chunks, a
// trailing single sample folded into the previous chunk.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch);

// Checkpoint of a freshly initialised model.
ModelCheckpoint initial_checkpoint(const TrainConfig& cfg, std::size_t series_length, const std::string& dataset = "");

struct EvalReport {
  std::string method;
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<std::uint64_t> split_seeds;
  int trial_count = 0;
  std::uint64_t pretext_steps = 0;
  // Per split, when the method pretrains: the epoch log of that run.
  std::vector<std::vector<EpochLog>> pretrain_logs;
};

EvalReport summarize(std::string method, std::vector<double> accuracies, std::vector<std::uint64_t> seeds,
                     std::uint64_t pretext_steps = 0);

// Eval-mode embeddings, N x 64 row-major.
std::vector<float> encode_dataset(model::Encoder& encoder, const TimeSeriesDataset& ds);
model::Encoder load_encoder(const ModelCheckpoint& ckpt);

// Trains a linear classifier on the train rows of `features` with Adam
// (lr_linear, eval_epochs epochs) and returns the test accuracy of the epoch
// with the best validation accuracy.
double probe_accuracy(std::span<const float> features, std::size_t dim, std::span<const int> labels, int classes,
                      const DataSplit& split, const TrainConfig& cfg, std::uint64_t seed);

// Frozen-backbone linear evaluation: `trials` classifiers per split seed.
EvalReport linear_eval(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg, int trials);
EvalReport linear_eval(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg, int trials,
                       std::span<const std::uint64_t> seeds);
// Explicit splits, e.g. from archive_split; seeds[i] drives the trials on splits[i].
EvalReport linear_eval(const ModelCheckpoint& ckpt, const TimeSeriesDataset& labeled, const TrainConfig& cfg, int trials,
                       std::span<const std::uint64_t> seeds, std::span<const DataSplit> splits);

// Keeps an archive's own split: the first `train_rows` rows train, the
// remaining rows are halved at random into validation and test.
DataSplit archive_split(const TimeSeriesDataset& ds, std::size_t train_rows, std::uint64_t seed);

// Linear evaluation of a backbone pretrained on another dataset.
EvalReport transfer_eval(const ModelCheckpoint& source, const TimeSeriesDataset& target, const TrainConfig& cfg);

// Per split: pretrain on the (unlabeled) train rows, then linear evaluation.
EvalReport evaluate_selftime(const TimeSeriesDataset& labeled, const TrainConfig& cfg);
// Per split: linear evaluation of a never-trained backbone.
EvalReport baseline_random_weights(const TimeSeriesDataset& labeled, const TrainConfig& cfg);
// Per split and trial: backbone and classifier trained jointly on the labels.
EvalReport baseline_supervised(const TimeSeriesDataset& labeled, const TrainConfig& cfg);

struct SweepRow {
  int classes = 0;
  double piece_ratio = 0.0;
  std::size_t piece_length = 0;
  bool skipped = false;
  std::string reason;
  double class_acc = 0.0;
  double linear_acc_mean = 0.0;
  double linear_acc_std = 0.0;
};

// One pretrain + linear_eval per (C, L/T) cell; infeasible cells are marked skipped.
std::vector<SweepRow> sweep(const TimeSeriesDataset& unlabeled, const TimeSeriesDataset& labeled,
                            std::span<const int> class_grid, std::span<const double> ratio_grid,
                            const TrainConfig& cfg);

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

// CSV writers.
void write_epoch_header(std::ostream& out);
void write_epoch_row(std::ostream& out, const EpochLog& row);
void write_report_csv(std::ostream& out, const EvalReport& report);
std::string report_summary(const EvalReport& report);
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

// id,label,f0..f63 with label `NA` for unlabeled data.
void write_embeddings(std::ostream& out, const ModelCheckpoint& ckpt, const TimeSeriesDataset& ds);
void export_embeddings(const ModelCheckpoint& ckpt, const TimeSeriesDataset& ds, const std::filesystem::path& path);

}  // namespace selftime::pipeline
