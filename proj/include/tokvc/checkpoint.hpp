#pragma once

// Binary checkpoint container.
//
// Layout (little-endian):
//   "TVCK"  u32 schema_len  schema   ("tokvc-checkpoint/1")
//   i64 step  u32 config_len  config text
//   u32 count, then per tensor:
//     u32 name_len  name  u8 dtype  u32 ndim  i64 dims[ndim]  u64 nbytes  payload
// dtype codes: 0 f32, 1 f64, 2 i64, 3 i32, 4 bool.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace tokvc {

inline constexpr const char* kCheckpointSchema = "tokvc-checkpoint/1";

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct Checkpoint {
  long step = 0;
  std::string config_text;
  NamedTensors tensors;

  /// Throws FormatError when absent.
  [[nodiscard]] const torch::Tensor& get(const std::string& name) const;
  [[nodiscard]] bool has(const std::string& name) const;
  /// Entries whose names start with `prefix`, with the prefix stripped.
  [[nodiscard]] NamedTensors with_prefix(const std::string& prefix) const;
};

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of a module tree, names prefixed.
NamedTensors module_state(const torch::nn::Module& m, const std::string& prefix);
/// Copies matching entries into the module; every parameter and buffer must
/// be present with the same shape.
void load_module_state(torch::nn::Module& m, const Checkpoint& ckpt, const std::string& prefix);

/// AdamW moments and step counts, keyed by parameter position.
NamedTensors optimizer_state(const torch::optim::AdamW& opt, const std::string& prefix);
void load_optimizer_state(torch::optim::AdamW& opt, const Checkpoint& ckpt, const std::string& prefix);

}  // namespace tokvc
