#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "selftime/model.hpp"
#include "selftime/optim.hpp"

namespace selftime::io {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>> values;

  DType dtype() const { return values.index() == 0 ? DType::f32 : DType::f64; }
  std::size_t numel() const;
};

// Bitwise equality of name, shape and values.
bool operator==(const CheckpointEntry& a, const CheckpointEntry& b);

// On disk (all integers little-endian):
//   "STCK" | u32 version | u32 n_meta | n_meta x (u32 len, key, u32 len, value)
//   | u32 n_entries | n_entries x (u32 len, name, u8 dtype, u8 rank, rank x u64 dim, raw values)
struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  std::optional<std::string> meta(const std::string& key) const;
  bool operator==(const ModelCheckpoint&) const = default;
};

std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the serialized bytes.
std::uint64_t checkpoint_hash(const ModelCheckpoint& ckpt);

// Model state (parameters and batch-norm buffers) under their stable names.
void store_model(ModelCheckpoint& ckpt, const model::SelfTimeModel& model);
void restore_model(const ModelCheckpoint& ckpt, model::SelfTimeModel& model);
// Backbone only; the relation heads are not needed for feature extraction.
void restore_encoder(const ModelCheckpoint& ckpt, model::Encoder& encoder);

// Optimizer moments stored as optim.m.<param> / optim.v.<param>.
void store_optimizer(ModelCheckpoint& ckpt, const model::SelfTimeModel& model, const nn::AdamState<float>& state);
void restore_optimizer(const ModelCheckpoint& ckpt, const model::SelfTimeModel& model, nn::AdamState<float>& state);

}  // namespace selftime::io
