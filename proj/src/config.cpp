#include "selftime/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

#include "selftime/errors.hpp"

namespace selftime {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

void apply_step_setting_in(augment::Step& step, const std::string& section, const std::string& key,
                           const std::string& value) {
  const std::string full = section + "." + key;
  auto unknown = [&] { throw ConfigError("unknown config key '" + full + "'"); };
  auto num = [&] { return parse_number<double>(full, value); };
  std::visit(Overloaded{
                 [&](augment::Jitter& s) { key == "sigma" ? void(s.sigma = num()) : unknown(); },
                 [&](augment::Scaling& s) {
                   if (key == "sigma") s.sigma = num();
                   else if (key == "mean") s.mean = num();
                   else unknown();
                 },
                 [&](augment::Cutout& s) { key == "ratio" ? void(s.ratio = num()) : unknown(); },
                 [&](augment::MagnitudeWarp& s) {
                   if (key == "sigma") s.sigma = num();
                   else if (key == "knots") s.knots = parse_number<int>(full, value);
                   else unknown();
                 },
                 [&](augment::TimeWarp& s) {
                   if (key == "sigma") s.sigma = num();
                   else if (key == "knots") s.knots = parse_number<int>(full, value);
                   else unknown();
                 },
                 [&](augment::WindowSlice& s) { key == "keep_ratio" ? void(s.keep_ratio = num()) : unknown(); },
                 [&](augment::WindowWarp& s) {
                   if (key == "window_ratio") s.window_ratio = num();
                   else if (key == "factors") s.factors = parse_list(full, value);
                   else unknown();
                 },
             },
             step);
}

}  // namespace

const std::vector<PretextPreset>& pretext_presets() {
  static const std::vector<PretextPreset> presets{
      {"CricketX", 3, 0.2},           {"UWaveGestureLibraryAll", 4, 0.2}, {"DodgerLoopDay", 5, 0.35},
      {"InsectWingbeatSound", 6, 0.4}, {"MFPT", 4, 0.2},                  {"XJTU", 4, 0.2},
  };
  return presets;
}

std::optional<PretextPreset> find_preset(std::string_view dataset) {
  auto lower = [](std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
  };
  for (const auto& p : pretext_presets())
    if (lower(p.dataset) == lower(dataset)) return p;
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ConfigError("config key '" + std::string(key) + "' must be positive");
  };
  if (epochs < 0) throw ConfigError("config key 'epochs' must be >= 0");
  positive("batch_size", batch_size);
  if (batch_size < 2) throw ConfigError("config key 'batch_size' must be >= 2 (negative pairs need a partner)");
  positive("lr_pretrain", lr_pretrain);
  positive("lr_linear", lr_linear);
  positive("K", K);
  if (C < 2) throw ConfigError("config key 'C' must be >= 2");
  if (!(piece_ratio > 0 && piece_ratio < 1)) throw ConfigError("config key 'piece_ratio' must be in (0,1)");
  positive("eval_epochs", eval_epochs);
  positive("trials", trials);
  positive("splits", splits);
  positive("piece_pairs", piece_pairs);
  positive("jobs", jobs);
  try {
    policy.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
  else if (key == "lr_pretrain") cfg.lr_pretrain = parse_number<double>(key, value);
  else if (key == "lr_linear") cfg.lr_linear = parse_number<double>(key, value);
  else if (key == "K") cfg.K = parse_number<int>(key, value);
  else if (key == "C") cfg.C = parse_number<int>(key, value);
  else if (key == "piece_ratio") cfg.piece_ratio = parse_number<double>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "eval_epochs") cfg.eval_epochs = parse_number<int>(key, value);
  else if (key == "trials") cfg.trials = parse_number<int>(key, value);
  else if (key == "splits") cfg.splits = parse_number<int>(key, value);
  else if (key == "piece_pairs") cfg.piece_pairs = parse_number<int>(key, value);
  else if (key == "stratified_pieces") cfg.stratified_pieces = parse_bool(key, value);
  else if (key == "normalize") cfg.normalize = parse_bool(key, value);
  else if (key == "jobs") cfg.jobs = parse_number<int>(key, value);
  else if (key == "preset") {
    auto p = find_preset(value);
    if (!p) throw ConfigError("config key 'preset': unknown dataset '" + value + "'");
    cfg.C = p->classes;
    cfg.piece_ratio = p->piece_ratio;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void apply_step_setting(augment::Step& step, const std::string& key, const std::string& value) {
  apply_step_setting_in(step, augment::step_name(step), key, trim(value));
}

TrainConfig parse_config(std::string_view text, const TrainConfig& base) {
  TrainConfig cfg = base;
  std::vector<augment::Step> steps;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      try {
        steps.push_back(augment::make_step(section));
      } catch (const InvalidArgument&) {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) {
      apply_setting(cfg, key, value);
    } else {
      apply_step_setting_in(steps.back(), section, key, value);
    }
  }
  if (!steps.empty()) cfg.policy.steps = std::move(steps);
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string format_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "epochs = " << cfg.epochs << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "lr_pretrain = " << num(cfg.lr_pretrain) << "\n"
     << "lr_linear = " << num(cfg.lr_linear) << "\n"
     << "K = " << cfg.K << "\n"
     << "C = " << cfg.C << "\n"
     << "piece_ratio = " << num(cfg.piece_ratio) << "\n"
     << "seed = " << cfg.seed << "\n"
     << "eval_epochs = " << cfg.eval_epochs << "\n"
     << "trials = " << cfg.trials << "\n"
     << "splits = " << cfg.splits << "\n"
     << "piece_pairs = " << cfg.piece_pairs << "\n"
     << "stratified_pieces = " << (cfg.stratified_pieces ? "true" : "false") << "\n"
     << "normalize = " << (cfg.normalize ? "true" : "false") << "\n"
     << "jobs = " << cfg.jobs << "\n";
  for (const auto& step : cfg.policy.steps) {
    os << "\n[" << augment::step_name(step) << "]\n";
    std::visit(Overloaded{
                   [&](const augment::Jitter& s) { os << "sigma = " << num(s.sigma) << "\n"; },
                   [&](const augment::Scaling& s) { os << "sigma = " << num(s.sigma) << "\nmean = " << num(s.mean) << "\n"; },
                   [&](const augment::Cutout& s) { os << "ratio = " << num(s.ratio) << "\n"; },
                   [&](const augment::MagnitudeWarp& s) { os << "knots = " << s.knots << "\nsigma = " << num(s.sigma) << "\n"; },
                   [&](const augment::TimeWarp& s) { os << "knots = " << s.knots << "\nsigma = " << num(s.sigma) << "\n"; },
                   [&](const augment::WindowSlice& s) { os << "keep_ratio = " << num(s.keep_ratio) << "\n"; },
                   [&](const augment::WindowWarp& s) {
                     os << "window_ratio = " << num(s.window_ratio) << "\nfactors = ";
                     for (std::size_t i = 0; i < s.factors.size(); ++i) os << (i ? ", " : "") << num(s.factors[i]);
                     os << "\n";
                   },
               },
               step);
  }
  return os.str();
}

}  // namespace selftime
