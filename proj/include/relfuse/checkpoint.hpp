#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "relfuse/fusion.hpp"
#include "relfuse/visual.hpp"

namespace relfuse {

struct Checkpoint {
  FusionModel model;
  std::optional<AttributeHead> attributes;
  std::uint64_t vocab_hash = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Deterministic JSON text: identical checkpoints serialize byte-identically
// and every double round-trips exactly.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace relfuse
