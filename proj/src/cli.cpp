#include "selftime/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "selftime/checkpoint.hpp"
#include "selftime/config.hpp"
#include "selftime/dataset.hpp"
#include "selftime/errors.hpp"
#include "selftime/pipeline.hpp"
#include "selftime/relation.hpp"

namespace selftime::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand that trains or evaluates.
struct CommonOptions {
  std::vector<std::string> data;
  std::string config;
  bool unlabeled = false;
  std::string delimiter = "auto";
  std::string missing = "reject";
  std::map<std::string, std::string> overrides;
};

const std::vector<std::pair<std::string, std::string>>& config_flags() {
  static const std::vector<std::pair<std::string, std::string>> flags = [] {
    const TrainConfig d;
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    std::ostringstream lr_pre, lr_lin, ratio;
    lr_pre << d.lr_pretrain;
    lr_lin << d.lr_linear;
    ratio << d.piece_ratio;
    return std::vector<std::pair<std::string, std::string>>{
        {"epochs", std::to_string(d.epochs)},
        {"batch_size", std::to_string(d.batch_size)},
        {"lr_pretrain", lr_pre.str()},
        {"lr_linear", lr_lin.str()},
        {"K", std::to_string(d.K)},
        {"C", std::to_string(d.C)},
        {"piece_ratio", ratio.str()},
        {"seed", "$SELFTIME_SEED or 0"},
        {"eval_epochs", std::to_string(d.eval_epochs)},
        {"trials", std::to_string(d.trials)},
        {"splits", std::to_string(d.splits)},
        {"piece_pairs", std::to_string(d.piece_pairs)},
        {"stratified_pieces", b(d.stratified_pieces)},
        {"normalize", b(d.normalize)},
        {"jobs", std::to_string(d.jobs)},
        {"preset", "none"},
    };
  }();
  return flags;
}

void add_data_options(CLI::App* sub, CommonOptions& o, bool data_required = true) {
  auto* data = sub->add_option("--data", o.data, "UCR-format file(s); several files are concatenated");
  if (data_required) data->required();
  sub->add_flag("--unlabeled", o.unlabeled, "files have no label column");
  sub->add_option("--delimiter", o.delimiter, "auto, tab or comma")
      ->check(CLI::IsMember({"auto", "tab", "comma"}))
      ->capture_default_str();
  sub->add_option("--missing", o.missing, "missing values: reject or interpolate")
      ->check(CLI::IsMember({"reject", "interpolate"}))
      ->capture_default_str();
}

void add_config_options(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "configuration file (key = value, [augmentation] sections)");
  for (const auto& [key, def] : config_flags()) {
    sub->add_option_function<std::string>(
           "--" + key, [&o, key = key](const std::string& v) { o.overrides[key] = v; },
           "config key '" + key + "' (default " + def + ")")
        ->type_name("VALUE");
  }
}

TrainConfig build_config(const CommonOptions& o) {
  TrainConfig base;
  if (const char* env = std::getenv("SELFTIME_SEED"); env && *env) apply_setting(base, "seed", env);
  TrainConfig cfg = o.config.empty() ? base : load_config(o.config, base);
  // Presets first so explicit C / piece_ratio flags win over them.
  if (auto it = o.overrides.find("preset"); it != o.overrides.end()) apply_setting(cfg, it->first, it->second);
  for (const auto& [key, value] : o.overrides)
    if (key != "preset") apply_setting(cfg, key, value);
  cfg.validate();
  return cfg;
}

data::LoadOptions load_options(const CommonOptions& o) {
  data::LoadOptions opts;
  opts.delimiter = o.delimiter == "tab" ? data::Delimiter::tab
                   : o.delimiter == "comma" ? data::Delimiter::comma
                                            : data::Delimiter::automatic;
  opts.labeled = !o.unlabeled;
  opts.missing = o.missing == "interpolate" ? data::MissingValues::interpolate : data::MissingValues::reject;
  return opts;
}

data::TimeSeriesDataset load_data(const std::vector<std::string>& files, const CommonOptions& o, bool normalize) {
  std::vector<std::filesystem::path> paths(files.begin(), files.end());
  auto ds = data::load_ucr(paths, load_options(o));
  return normalize ? data::znormalize(ds) : ds;
}

// Writes to `path`, or to `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : path_(path) {
    if (path.empty()) {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw DataError("cannot open " + path + " for writing");
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) throw DataError("write failed" + (path_.empty() ? std::string() : ": " + path_));
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream in(item);
    T v{};
    if (!(in >> v) || !(in >> std::ws).eof()) throw ConfigError(std::string("bad ") + what + " list entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

void emit_report(const pipeline::EvalReport& report, const std::string& path, std::ostream& out, std::ostream& err) {
  Sink sink(path, out);
  pipeline::write_report_csv(sink.get(), report);
  sink.finish();
  err << pipeline::report_summary(report) << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"selftime: self-supervised time series representation learning"};
  app.name("selftime");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  CommonOptions common;
  std::string out_path, log_path, resume_path, checkpoint_path, report_path, classes_text, ratios_text, op;
  std::vector<std::string> params, test_files;
  bool archive_split = false;
  std::size_t length = 0, piece = 0;
  int classes = 0;
  std::optional<std::size_t> row;
  std::optional<std::uint64_t> seed_only;
  std::string embed_normalize = "true";

  auto* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining; per-epoch CSV log");
  add_data_options(pretrain, common);
  add_config_options(pretrain, common);
  pretrain->add_option("--out", out_path, "checkpoint to write")->required();
  pretrain->add_option("--log", log_path, "epoch log CSV (default stdout)");
  pretrain->add_option("--resume", resume_path, "continue from a checkpoint written by pretrain");

  auto* eval = app.add_subcommand("eval-linear",
                                  "linear evaluation of a frozen backbone; without --checkpoint, pretrains on each "
                                  "train split first");
  add_data_options(eval, common);
  add_config_options(eval, common);
  eval->add_option("--checkpoint", checkpoint_path, "pretrained checkpoint");
  eval->add_option("--out", report_path, "report CSV (default stdout)");
  eval->add_option("--test", test_files, "archive test file(s), used with --archive-split");
  eval->add_flag("--archive-split", archive_split,
                 "train on the --data rows, split the --test rows into validation and test");

  auto* transfer = app.add_subcommand("transfer", "linear evaluation on a target dataset with a source backbone");
  add_data_options(transfer, common);
  add_config_options(transfer, common);
  transfer->add_option("--checkpoint", checkpoint_path, "checkpoint pretrained on the source data")->required();
  transfer->add_option("--out", report_path, "report CSV (default stdout)");

  auto* supervised = app.add_subcommand("supervised", "backbone and classifier trained on labels");
  add_data_options(supervised, common);
  add_config_options(supervised, common);
  supervised->add_option("--out", report_path, "report CSV (default stdout)");

  auto* random = app.add_subcommand("random-baseline", "linear evaluation of an untrained backbone");
  add_data_options(random, common);
  add_config_options(random, common);
  random->add_option("--out", report_path, "report CSV (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "pretrain + linear evaluation over a (C, piece_ratio) grid");
  add_data_options(sweep, common);
  add_config_options(sweep, common);
  sweep->add_option("--classes", classes_text, "comma separated C values")->required();
  sweep->add_option("--ratios", ratios_text, "comma separated piece_ratio values")->required();
  sweep->add_option("--out", out_path, "sweep CSV (default stdout)");

  auto* augment = app.add_subcommand("augment", "original and transformed series as CSV");
  add_data_options(augment, common);
  augment->add_option("--op", op, "augmentation kind")->required()->check(CLI::IsMember(augment::step_kinds()));
  augment->add_option("--param", params, "step parameter key=value, e.g. sigma=0.3 (repeatable)");
  augment->add_option("--seed", seed_only, "random seed (default $SELFTIME_SEED or 0)");
  augment->add_option("--row", row, "only this series (0-based)");
  augment->add_option("--out", out_path, "CSV output (default stdout)");

  auto* labels = app.add_subcommand("relation-labels", "temporal relation label histogram over all piece pairs");
  labels->add_option("--length", length, "series length T")->required();
  labels->add_option("--classes", classes, "relation classes C")->required();
  labels->add_option("--piece", piece, "piece length L")->required();

  auto* embed = app.add_subcommand("embed", "export backbone embeddings as CSV");
  add_data_options(embed, common);
  embed->add_option("--normalize", embed_normalize, "z-normalize series")->capture_default_str();
  embed->add_option("--checkpoint", checkpoint_path, "checkpoint")->required();
  embed->add_option("--out", out_path, "CSV output (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (pretrain->parsed()) {
      const auto cfg = build_config(common);
      auto ds = load_data(common.data, common, cfg.normalize);
      if (ds.has_labels()) ds = ds.without_labels();
      std::optional<io::ModelCheckpoint> resume;
      if (!resume_path.empty()) resume = io::load_checkpoint(resume_path);
      Sink log(log_path, out);
      pipeline::write_epoch_header(log.get());
      pipeline::PretrainOptions opts;
      opts.resume = resume ? &*resume : nullptr;
      opts.on_epoch = [&](const pipeline::EpochLog& row) {
        pipeline::write_epoch_row(log.get(), row);
        err << "epoch " << row.epoch << "/" << cfg.epochs << " loss " << row.loss_total << " class_acc "
            << row.class_acc << "\n";
      };
      const auto result = pipeline::pretrain(ds, cfg, opts);
      log.finish();
      io::save_checkpoint(result.checkpoint, out_path);
      err << "wrote " << out_path << " (" << result.work.steps << " steps)\n";
    } else if (eval->parsed()) {
      const auto cfg = build_config(common);
      if (archive_split) {
        if (test_files.empty()) throw UsageError("--archive-split needs --test");
        if (checkpoint_path.empty()) throw UsageError("--archive-split needs --checkpoint");
        std::vector<std::string> all = common.data;
        all.insert(all.end(), test_files.begin(), test_files.end());
        const auto train_rows = load_data(common.data, common, false).size();
        const auto ds = load_data(all, common, cfg.normalize);
        const auto seeds = pipeline::split_seeds(cfg);
        std::vector<pipeline::DataSplit> splits;
        for (auto s : seeds) splits.push_back(pipeline::archive_split(ds, train_rows, s));
        const auto report = pipeline::linear_eval(io::load_checkpoint(checkpoint_path), ds, cfg, cfg.trials, seeds, splits);
        emit_report(report, report_path, out, err);
      } else {
        if (!test_files.empty()) throw UsageError("--test is only used with --archive-split");
        const auto ds = load_data(common.data, common, cfg.normalize);
        const auto report = checkpoint_path.empty()
                                ? pipeline::evaluate_selftime(ds, cfg)
                                : pipeline::linear_eval(io::load_checkpoint(checkpoint_path), ds, cfg, cfg.trials);
        emit_report(report, report_path, out, err);
      }
    } else if (transfer->parsed()) {
      const auto cfg = build_config(common);
      const auto ds = load_data(common.data, common, cfg.normalize);
      emit_report(pipeline::transfer_eval(io::load_checkpoint(checkpoint_path), ds, cfg), report_path, out, err);
    } else if (supervised->parsed()) {
      const auto cfg = build_config(common);
      const auto ds = load_data(common.data, common, cfg.normalize);
      emit_report(pipeline::baseline_supervised(ds, cfg), report_path, out, err);
    } else if (random->parsed()) {
      const auto cfg = build_config(common);
      const auto ds = load_data(common.data, common, cfg.normalize);
      emit_report(pipeline::baseline_random_weights(ds, cfg), report_path, out, err);
    } else if (sweep->parsed()) {
      const auto cfg = build_config(common);
      const auto ds = load_data(common.data, common, cfg.normalize);
      const auto cs = parse_list<int>(classes_text, "--classes");
      const auto rs = parse_list<double>(ratios_text, "--ratios");
      const auto rows = pipeline::sweep(ds.without_labels(), ds, cs, rs, cfg);
      for (const auto& r : rows)
        if (r.skipped) err << "skipped C=" << r.classes << " piece_ratio=" << r.piece_ratio << ": " << r.reason << "\n";
      Sink sink(out_path, out);
      pipeline::write_sweep_csv(sink.get(), rows);
      sink.finish();
    } else if (augment->parsed()) {
      TrainConfig seed_cfg;
      if (seed_only) {
        seed_cfg.seed = *seed_only;
      } else if (const char* env = std::getenv("SELFTIME_SEED"); env && *env) {
        apply_setting(seed_cfg, "seed", env);
      }
      auto step = augment::make_step(op);
      for (const auto& p : params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw UsageError("--param expects key=value, got '" + p + "'");
        apply_step_setting(step, p.substr(0, eq), p.substr(eq + 1));
      }
      augment::AugmentationPolicy policy{{step}};
      try {
        policy.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
      const auto ds = load_data(common.data, common, false);
      if (row && *row >= ds.size()) throw UsageError("--row " + std::to_string(*row) + " is out of range");
      Sink sink(out_path, out);
      auto& o = sink.get();
      o.precision(17);
      o << "id,t,original,transformed\n";
      for (std::size_t i = row.value_or(0); i < (row ? *row + 1 : ds.size()); ++i) {
        auto rng = augment::view_stream(seed_cfg.seed, 0, i, 0);
        const auto x = ds.row(i);
        const auto y = augment::apply_step(x, step, rng);
        for (std::size_t t = 0; t < x.size(); ++t) o << i << ',' << t << ',' << x[t] << ',' << y[t] << '\n';
      }
      sink.finish();
    } else if (labels->parsed()) {
      const auto hist = relation::label_histogram(length, classes, piece);
      std::uint64_t total = 0;
      for (auto h : hist) total += h;
      out << "label,count,fraction\n";
      out.precision(17);
      for (std::size_t k = 0; k < hist.size(); ++k) {
        out << k << ',' << hist[k] << ',' << (total ? static_cast<double>(hist[k]) / static_cast<double>(total) : 0.0)
            << '\n';
      }
    } else if (embed->parsed()) {
      TrainConfig cfg;
      apply_setting(cfg, "normalize", embed_normalize);
      const auto ds = load_data(common.data, common, cfg.normalize);
      Sink sink(out_path, out);
      pipeline::write_embeddings(sink.get(), io::load_checkpoint(checkpoint_path), ds);
      sink.finish();
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace selftime::cli
