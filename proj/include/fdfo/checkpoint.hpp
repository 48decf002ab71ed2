#pragma once
// Binary model checkpoints: network shape + flat parameters, optional
// optimizer state, a config fingerprint, and the epoch counter. Doubles are
// stored as little-endian IEEE-754 bits, so save/load round-trips bit-exactly.

#include <cstdint>
#include <string>

#include "fdfo/adamw.hpp"
#include "fdfo/net.hpp"

namespace fdfo {

struct Checkpoint {
  VelocityNet net;
  bool has_opt = false;
  AdamWState opt;          // moments + step only meaningful when has_opt
  uint64_t config_hash = 0;
  int epoch = 0;
};

// FNV-1a 64-bit, used to fingerprint the config text a run was produced with.
uint64_t fnv1a(const std::string& s);

// Throws std::runtime_error on I/O failure (message includes the path).
void save_checkpoint(const std::string& path, const Checkpoint& ck);

// Throws std::runtime_error on I/O failure, bad magic, unsupported version,
// or truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fdfo
