#include "selftime/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "selftime/errors.hpp"

namespace selftime::io {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};

template <class T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const std::string& what) {
    need(sizeof(T), what);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string get_string(const std::string& what) {
    const auto len = get<std::uint32_t>(what);
    need(len, what);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void need(std::size_t count, const std::string& what) const {
    if (bytes_.size() - pos_ < count) throw CorruptionError("checkpoint truncated while reading " + what);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

template <class Real>
std::vector<std::uint64_t> dims_of(const nn::BasicTensor<Real>& t) {
  return std::vector<std::uint64_t>(t.shape().begin(), t.shape().end());
}

void copy_into(const CheckpointEntry& entry, nn::Tensor& target) {
  if (entry.dims != dims_of(target)) {
    throw FormatError("checkpoint entry " + entry.name + " has shape incompatible with the model");
  }
  auto dst = target.data();
  std::visit(
      [&](const auto& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(src[i]);
      },
      entry.values);
}

const CheckpointEntry& require_entry(const ModelCheckpoint& ckpt, const std::string& name) {
  const auto* e = ckpt.find(name);
  if (!e) throw FormatError("checkpoint is missing entry " + name);
  return *e;
}

}  // namespace

std::size_t CheckpointEntry::numel() const {
  return std::visit([](const auto& v) { return v.size(); }, values);
}

bool operator==(const CheckpointEntry& a, const CheckpointEntry& b) {
  if (a.name != b.name || a.dims != b.dims || a.values.index() != b.values.index()) return false;
  // Bitwise comparison: NaN payloads and signed zeros count.
  return std::visit(
      [&](const auto& va) {
        const auto& vb = std::get<std::decay_t<decltype(va)>>(b.values);
        return va.size() == vb.size() &&
               std::memcmp(va.data(), vb.data(), va.size() * sizeof(typename std::decay_t<decltype(va)>::value_type)) == 0;
      },
      a.values);
}

const CheckpointEntry* ModelCheckpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::optional<std::string> ModelCheckpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) return std::nullopt;
  return it->second;
}

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, ModelCheckpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    std::uint64_t expected = 1;
    for (auto d : e.dims) expected *= d;
    if (expected != e.numel()) throw InvalidArgument("checkpoint entry " + e.name + ": dims do not match value count");
    if (e.dims.size() > 255) throw InvalidArgument("checkpoint entry " + e.name + ": rank too large");
    put_string(out, e.name);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put<std::uint64_t>(out, d);
    std::visit(
        [&](const auto& vals) {
          for (auto v : vals) put(out, v);
        },
        e.values);
  }
  return out;
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const std::string body = bytes.substr(4);
  Reader r(body);
  const auto version = r.get<std::uint32_t>("version");
  if (version != ModelCheckpoint::kVersion) {
    throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                                  std::to_string(ModelCheckpoint::kVersion) + ")");
  }
  ModelCheckpoint ckpt;
  const auto n_meta = r.get<std::uint32_t>("metadata count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = r.get_string("metadata key");
    ckpt.metadata[key] = r.get_string("metadata value for " + key);
  }
  const auto n_entries = r.get<std::uint32_t>("entry count");
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    CheckpointEntry e;
    e.name = r.get_string("entry name");
    const auto dtype = r.get<std::uint8_t>("dtype of " + e.name);
    const auto rank = r.get<std::uint8_t>("rank of " + e.name);
    std::uint64_t count = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.get<std::uint64_t>("dims of " + e.name));
      count *= e.dims.back();
    }
    const std::size_t width = dtype == static_cast<std::uint8_t>(DType::f32) ? 4 : 8;
    if (dtype != static_cast<std::uint8_t>(DType::f32) && dtype != static_cast<std::uint8_t>(DType::f64)) {
      throw FormatError("checkpoint entry " + e.name + ": unknown dtype code " + std::to_string(dtype));
    }
    if (count > r.remaining() / width) throw CorruptionError("checkpoint entry " + e.name + " is truncated");
    if (width == 4) {
      std::vector<float> v(count);
      for (auto& x : v) x = r.get<float>(e.name);
      e.values = std::move(v);
    } else {
      std::vector<double> v(count);
      for (auto& x : v) x = r.get<double>(e.name);
      e.values = std::move(v);
    }
    ckpt.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw CorruptionError("checkpoint has trailing bytes after the last entry");
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t checkpoint_hash(const ModelCheckpoint& ckpt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_checkpoint(ckpt)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void store_model(ModelCheckpoint& ckpt, const model::SelfTimeModel& model) {
  for (const auto& [name, t] : model.state()) {
    std::vector<float> vals(t.data().begin(), t.data().end());
    ckpt.entries.push_back({name, dims_of(t), std::move(vals)});
  }
}

void restore_model(const ModelCheckpoint& ckpt, model::SelfTimeModel& model) {
  for (auto& [name, t] : model.state()) {
    nn::Tensor target = t;
    copy_into(require_entry(ckpt, name), target);
  }
}

void restore_encoder(const ModelCheckpoint& ckpt, model::Encoder& encoder) {
  for (auto& [name, t] : encoder.named_parameters("backbone")) {
    nn::Tensor target = t;
    copy_into(require_entry(ckpt, name), target);
  }
  for (auto& [name, t] : encoder.named_buffers("backbone")) {
    nn::Tensor target = t;
    copy_into(require_entry(ckpt, name), target);
  }
}

void store_optimizer(ModelCheckpoint& ckpt, const model::SelfTimeModel& model, const nn::AdamState<float>& state) {
  const auto params = model.named_parameters();
  if (params.size() != state.m.size()) throw InvalidArgument("optimizer state does not match model parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.entries.push_back({"optim.m." + params[i].first, dims_of(params[i].second), state.m[i]});
    ckpt.entries.push_back({"optim.v." + params[i].first, dims_of(params[i].second), state.v[i]});
  }
  ckpt.metadata["adam_step"] = std::to_string(state.step_count);
}

void restore_optimizer(const ModelCheckpoint& ckpt, const model::SelfTimeModel& model, nn::AdamState<float>& state) {
  const auto params = model.named_parameters();
  state.m.assign(params.size(), {});
  state.v.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto* slot : {&state.m[i], &state.v[i]}) {
      const std::string name = (slot == &state.m[i] ? "optim.m." : "optim.v.") + params[i].first;
      const auto& e = require_entry(ckpt, name);
      if (e.numel() != params[i].second.numel()) throw FormatError("checkpoint entry " + name + " has wrong size");
      std::visit([&](const auto& src) { slot->assign(src.begin(), src.end()); }, e.values);
    }
  }
  const auto step = ckpt.meta("adam_step");
  if (!step) throw FormatError("checkpoint has optimizer moments but no adam_step");
  state.step_count = std::stoll(*step);
}

}  // namespace selftime::io
