#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

namespace selftime::data {

// N univariate series of one length T, stored row-major.
struct TimeSeriesDataset {
  std::string name;
  std::size_t length = 0;
  std::vector<double> values;
  std::vector<int> labels;              // empty when unlabeled; otherwise 0..num_classes-1
  std::vector<std::string> label_map;   // internal label -> label text as it appeared in the file
  bool normalized = false;

  std::size_t size() const { return length ? values.size() / length : 0; }
  bool has_labels() const { return !labels.empty(); }
  int num_classes() const { return static_cast<int>(label_map.size()); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * length, length);
  }

  TimeSeriesDataset subset(std::span<const std::size_t> indices) const;
  TimeSeriesDataset without_labels() const;
  // Throws InvalidArgument when the invariants do not hold.
  void validate() const;
};

enum class Delimiter { automatic, tab, comma };
enum class MissingValues { reject, interpolate };

struct LoadOptions {
  Delimiter delimiter = Delimiter::automatic;
  bool labeled = true;  // first column holds the class label
  MissingValues missing = MissingValues::reject;
};

// UCR text format: one series per line, label first.
TimeSeriesDataset parse_ucr(std::istream& in, const LoadOptions& options, const std::string& name = "");
TimeSeriesDataset load_ucr(const std::filesystem::path& path, const LoadOptions& options = {});
// Concatenates files (e.g. an archive's TRAIN and TEST) before label remapping.
TimeSeriesDataset load_ucr(std::span<const std::filesystem::path> paths, const LoadOptions& options = {});

void write_ucr(std::ostream& out, const TimeSeriesDataset& ds, Delimiter delimiter = Delimiter::tab);
void save_ucr(const TimeSeriesDataset& ds, const std::filesystem::path& path, Delimiter delimiter = Delimiter::tab);

// Per-series zero mean and unit (population) deviation; series with
// deviation below 1e-8 are only centred.
TimeSeriesDataset znormalize(const TimeSeriesDataset& ds);

// Builds a dataset from in-memory rows; labels are remapped like file labels.
TimeSeriesDataset from_rows(std::vector<double> values, std::size_t length, std::vector<int> raw_labels = {},
                            std::string name = "");

}  // namespace selftime::data
