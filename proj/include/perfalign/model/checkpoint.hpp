#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "perfalign/model/tokenizer.hpp"
#include "perfalign/model/transformer.hpp"

namespace perfalign {

enum class Role { base, sft, rlpf, dpa, reward };

const char* to_string(Role role);
Role role_from_string(std::string_view name);

inline constexpr int kCheckpointFormat = 1;

struct Checkpoint {
  Weights weights;
  Tokenizer tokenizer;
  Role role = Role::base;
  /// Additional named tensors such as scalar heads ("value_head.weight", ...).
  std::map<std::string, Matrix> extras;

  /// Exact tensor equality.
  bool operator==(const Checkpoint& other) const;
};

/// File layout: 8-byte magic, u64 little-endian header length, JSON header
/// (format, role, config, vocabulary, tensor manifest), then the payload of
/// little-endian IEEE doubles. Non-finite tensors are refused in both directions
/// with a NumericalError naming the tensor.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

/// Fresh base model sized for `tokenizer`.
Checkpoint make_base_checkpoint(ModelConfig config, const Tokenizer& tokenizer, std::uint64_t seed,
                                bool zero_head = false);

}  // namespace perfalign
