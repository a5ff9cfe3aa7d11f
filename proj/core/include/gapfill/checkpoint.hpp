#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/tensor.hpp"

namespace gapfill {

std::uint64_t fnv1a_hash(std::string_view bytes);

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// Self-describing weight container: named shaped f64 payloads (little-endian
/// on disk) plus an engine version, a config hash, and a free-form metadata
/// string (models stash their config and normalization stats there).
struct Checkpoint {
  std::string engine_version;
  std::uint64_t config_hash = 0;
  std::string metadata;
  std::vector<CheckpointEntry> entries;

  void add(const std::string& name, const Tensor& t);
  const CheckpointEntry* find(const std::string& name) const;
  /// Entry as a fresh tensor; throws if the name is absent.
  Tensor tensor(const std::string& name, bool requires_grad = false) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gapfill
