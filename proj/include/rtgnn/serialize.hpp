#pragma once

// Binary encodings for tensors and the checkpoint container. The byte layout
// is documented in docs/checkpoint_format.md; all integers and doubles are
// little-endian.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rtgnn/tensor.hpp"

namespace rtgnn {

// Bad magic, unsupported version, truncated stream or trailing garbage.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> tensor_serialize(const Tensor& t);
// Decodes exactly one tensor record occupying the whole buffer.
Tensor tensor_deserialize(std::span<const std::uint8_t> bytes);

struct CheckpointContainer {
  std::uint32_t format_version = kCheckpointFormatVersion;
  std::uint64_t model_digest = 0;
  std::uint64_t train_digest = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& find(const std::string& name) const;
  bool operator==(const CheckpointContainer& other) const = default;
};

std::vector<std::uint8_t> encode_container(const CheckpointContainer& c);
CheckpointContainer decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const CheckpointContainer& c);
CheckpointContainer read_container(const std::filesystem::path& path);

// 64-bit FNV-1a, used for configuration digests.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace rtgnn
