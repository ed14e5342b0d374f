// Binary checkpoint container: per parameter (name, shape, row-major
// float64 payload), plus a format version and a config snapshot string.
// Round-trips byte-exactly.

#pragma once

#include <string>

#include "acdnet/optim.hpp"

namespace acdnet {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamRegistry& params, const std::string& config_json,
                     const std::string& path);

// Loads parameters into a fresh registry; returns the config snapshot.
std::string load_checkpoint(ParamRegistry& params, const std::string& path);

}  // namespace acdnet
