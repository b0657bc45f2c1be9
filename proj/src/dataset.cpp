#include "selftime/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "selftime/errors.hpp"

namespace selftime::data {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

bool is_missing(const std::string& cell) {
  std::string lower;
  for (char c : cell) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "nan" || lower == "?" || lower.empty();
}

bool parse_double(const std::string& cell, double& out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

// Sorted numerically when every label is a number, lexicographically otherwise.
std::vector<std::string> ordered_labels(const std::vector<std::string>& raw) {
  std::vector<std::string> unique(raw.begin(), raw.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  bool numeric = true;
  for (const auto& l : unique) {
    double v;
    numeric = numeric && parse_double(l, v);
  }
  if (numeric) {
    std::stable_sort(unique.begin(), unique.end(), [](const std::string& a, const std::string& b) {
      double x, y;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
    // "1" and "1.0" denote one class.
    std::vector<std::string> dedup;
    double last = std::numeric_limits<double>::quiet_NaN();
    for (const auto& l : unique) {
      double v;
      parse_double(l, v);
      if (dedup.empty() || v != last) dedup.push_back(l);
      last = v;
    }
    unique = std::move(dedup);
  }
  return unique;
}

void assign_labels(TimeSeriesDataset& ds, const std::vector<std::string>& raw) {
  ds.label_map = ordered_labels(raw);
  std::map<std::string, int> exact;
  std::vector<std::pair<double, int>> numeric;
  for (std::size_t i = 0; i < ds.label_map.size(); ++i) {
    exact[ds.label_map[i]] = static_cast<int>(i);
    double v;
    if (parse_double(ds.label_map[i], v)) numeric.emplace_back(v, static_cast<int>(i));
  }
  ds.labels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (auto it = exact.find(raw[i]); it != exact.end()) {
      ds.labels[i] = it->second;
      continue;
    }
    double v;
    parse_double(raw[i], v);
    for (auto& [value, id] : numeric)
      if (value == v) ds.labels[i] = id;
  }
}

void fill_missing(std::vector<double>& row, std::size_t line) {
  std::vector<std::size_t> known;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (!std::isnan(row[i])) known.push_back(i);
  if (known.empty()) throw ParseError("line " + std::to_string(line) + ": series has no observed values");
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!std::isnan(row[i])) continue;
    auto hi = std::upper_bound(known.begin(), known.end(), i);
    if (hi == known.begin()) {
      row[i] = row[known.front()];
    } else if (hi == known.end()) {
      row[i] = row[known.back()];
    } else {
      const std::size_t b = *hi, a = *(hi - 1);
      const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
      row[i] = row[a] + w * (row[b] - row[a]);
    }
  }
}

struct RawRows {
  std::vector<double> values;
  std::vector<std::string> labels;
  std::size_t length = 0;
};

void parse_into(std::istream& in, const LoadOptions& options, const std::string& source, RawRows& rows) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    char delim = options.delimiter == Delimiter::comma ? ',' : '\t';
    if (options.delimiter == Delimiter::automatic) delim = line.find('\t') != std::string::npos ? '\t' : ',';
    auto cells = split_line(line, delim);
    const std::size_t first = options.labeled ? 1 : 0;
    if (cells.size() <= first) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": row has no values");
    }
    const std::size_t len = cells.size() - first;
    if (rows.length == 0) {
      rows.length = len;
    } else if (len != rows.length) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": row has " + std::to_string(len) +
                       " values, expected " + std::to_string(rows.length));
    }
    if (options.labeled) {
      if (cells[0].empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": missing label");
      rows.labels.push_back(cells[0]);
    }
    std::vector<double> row(len);
    bool gaps = false;
    for (std::size_t j = 0; j < len; ++j) {
      const auto& cell = cells[first + j];
      if (is_missing(cell)) {
        if (options.missing == MissingValues::reject) {
          throw ParseError(source + ":" + std::to_string(line_no) + ":" + std::to_string(first + j + 1) +
                           ": missing value (enable interpolation to impute)");
        }
        row[j] = std::numeric_limits<double>::quiet_NaN();
        gaps = true;
      } else if (!parse_double(cell, row[j]) || !std::isfinite(row[j])) {
        throw ParseError(source + ":" + std::to_string(line_no) + ":" + std::to_string(first + j + 1) +
                         ": not a number: '" + cell + "'");
      }
    }
    if (gaps) fill_missing(row, line_no);
    rows.values.insert(rows.values.end(), row.begin(), row.end());
  }
}

TimeSeriesDataset finish(RawRows rows, const std::string& name, const std::string& source) {
  if (rows.length == 0) throw ParseError(source + ": no series found");
  TimeSeriesDataset ds;
  ds.name = name;
  ds.length = rows.length;
  ds.values = std::move(rows.values);
  if (!rows.labels.empty()) assign_labels(ds, rows.labels);
  return ds;
}

}  // namespace

TimeSeriesDataset TimeSeriesDataset::subset(std::span<const std::size_t> indices) const {
  TimeSeriesDataset out;
  out.name = name;
  out.length = length;
  out.label_map = label_map;
  out.normalized = normalized;
  out.values.reserve(indices.size() * length);
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset: index " + std::to_string(i) + " out of range");
    auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    if (has_labels()) out.labels.push_back(labels[i]);
  }
  return out;
}

TimeSeriesDataset TimeSeriesDataset::without_labels() const {
  TimeSeriesDataset out = *this;
  out.labels.clear();
  out.label_map.clear();
  return out;
}

void TimeSeriesDataset::validate() const {
  if (length == 0 || values.size() % length != 0) throw InvalidArgument("dataset: values do not form whole series");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("dataset: non-finite value");
  if (has_labels()) {
    if (labels.size() != size()) throw InvalidArgument("dataset: label count does not match series count");
    for (int l : labels)
      if (l < 0 || l >= num_classes()) throw InvalidArgument("dataset: label outside label map");
  }
}

TimeSeriesDataset parse_ucr(std::istream& in, const LoadOptions& options, const std::string& name) {
  RawRows rows;
  parse_into(in, options, name.empty() ? "<input>" : name, rows);
  return finish(std::move(rows), name, name.empty() ? "<input>" : name);
}

TimeSeriesDataset load_ucr(const std::filesystem::path& path, const LoadOptions& options) {
  std::array<std::filesystem::path, 1> one{path};
  return load_ucr(std::span<const std::filesystem::path>(one), options);
}

TimeSeriesDataset load_ucr(std::span<const std::filesystem::path> paths, const LoadOptions& options) {
  if (paths.empty()) throw InvalidArgument("load_ucr: no input files");
  RawRows rows;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    parse_into(in, options, p.string(), rows);
  }
  std::string name = paths[0].stem().string();
  for (const char* suffix : {"_TRAIN", "_TEST"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) name.resize(name.size() - s.size());
  }
  return finish(std::move(rows), name, paths[0].string());
}

void write_ucr(std::ostream& out, const TimeSeriesDataset& ds, Delimiter delimiter) {
  const char delim = delimiter == Delimiter::comma ? ',' : '\t';
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bool first = true;
    if (ds.has_labels()) {
      out << ds.label_map[static_cast<std::size_t>(ds.labels[i])];
      first = false;
    }
    for (double v : ds.row(i)) {
      if (!first) out << delim;
      first = false;
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void save_ucr(const TimeSeriesDataset& ds, const std::filesystem::path& path, Delimiter delimiter) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_ucr(out, ds, delimiter);
  if (!out) throw DataError("write failed: " + path.string());
}

TimeSeriesDataset znormalize(const TimeSeriesDataset& ds) {
  TimeSeriesDataset out = ds;
  const std::size_t t = ds.length;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double* r = out.values.data() + i * t;
    double mean = 0.0;
    for (std::size_t j = 0; j < t; ++j) mean += r[j];
    mean /= static_cast<double>(t);
    double ss = 0.0;
    for (std::size_t j = 0; j < t; ++j) ss += (r[j] - mean) * (r[j] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(t));
    for (std::size_t j = 0; j < t; ++j) r[j] = sd < 1e-8 ? r[j] - mean : (r[j] - mean) / sd;
  }
  out.normalized = true;
  return out;
}

TimeSeriesDataset from_rows(std::vector<double> values, std::size_t length, std::vector<int> raw_labels,
                            std::string name) {
  if (length == 0 || values.size() % length != 0) throw InvalidArgument("from_rows: values do not form whole series");
  TimeSeriesDataset ds;
  ds.name = std::move(name);
  ds.length = length;
  ds.values = std::move(values);
  if (!raw_labels.empty()) {
    if (raw_labels.size() != ds.size()) throw InvalidArgument("from_rows: label count does not match series count");
    std::vector<std::string> raw;
    raw.reserve(raw_labels.size());
    for (int l : raw_labels) raw.push_back(std::to_string(l));
    assign_labels(ds, raw);
  }
  return ds;
}

}  // namespace selftime::data
