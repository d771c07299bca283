#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wsk/arch.hpp"
#include "wsk/model.hpp"
#include "wsk/tensor.hpp"

namespace wsk {

// A trained first-order model: weights plus provenance. One checkpoint is
// one metadata point for the second-order net.
struct Checkpoint {
  ArchDescriptor arch;
  ModelWeights weights;
  int task_id = 0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  std::uint64_t config_hash = 0;

  void validate() const;
  // Serialization order: conv1.weight .. convL.weight, fc.weight, fc.bias.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Exact on-disk byte count of a checkpoint, computable from the arch and
// metadata alone (the container format has no variable padding).
std::size_t checkpoint_file_size(const Checkpoint& ck);

// The underlying container: magic "WSKCKPT1", u32 version, u32 metadata
// length + UTF-8 JSON metadata, u32 tensor count, per-tensor index entries
// (u32 name length + bytes, u32 rank, u64 extents, u64 absolute payload
// offset), then raw little-endian f64 payloads in index order. Also used
// for second-order parameter files (metadata kind "second-order").
namespace container {

constexpr char kMagic[8] = {'W', 'S', 'K', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Tensor tensor;
};

struct File {
  std::string metadata;  // JSON text
  std::vector<Entry> tensors;
};

// Writes to a temp file in the same directory, then renames into place.
void write(const std::filesystem::path& path, const File& file);
File read(const std::filesystem::path& path);

std::size_t encoded_size(const File& file);

}  // namespace container

}  // namespace wsk
