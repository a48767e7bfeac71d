#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stairwalk/nnet/autodiff.hpp"

namespace stairwalk::nnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors plus a header that ties them to a configuration and an
/// observation layout. Tensors keep insertion order.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t layout_checksum = 0;
  std::string meta;  // free-form JSON text
  std::vector<std::pair<std::string, Mat>> tensors;

  void put(const std::string& name, const Mat& m);
  [[nodiscard]] bool has(const std::string& name) const;
  /// Throws ParseError when the tensor is absent.
  [[nodiscard]] const Mat& get(const std::string& name) const;

  void store(const std::vector<Parameter>& params, const std::string& prefix);
  void store(const std::vector<Parameter*>& params, const std::string& prefix);
  /// Copies tensors back; names and shapes must match exactly.
  void restore(std::vector<Parameter>& params, const std::string& prefix) const;
  void restore(const std::vector<Parameter*>& params, const std::string& prefix) const;
};

[[nodiscard]] std::string serialize(const Checkpoint& c);
/// Throws ParseError on a bad magic, version, truncation, or checksum.
[[nodiscard]] Checkpoint deserialize(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& c);
[[nodiscard]] Checkpoint load_checkpoint(const std::string& path);

/// Throws LayoutMismatch naming both checksums when they differ.
void require_layout(const Checkpoint& c, std::uint64_t expected);

}  // namespace stairwalk::nnet
