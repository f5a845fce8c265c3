// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "rgu/config.hpp"
#include "rgu/nn.hpp"

namespace rgu::app {

inline constexpr int kCheckpointVersion = 1;

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::string stage;  // "init", "pretrain" or "unlearn:<strategy>"
};

struct Checkpoint {
  int version = kCheckpointVersion;
  nn::NoisePredictor model{nn::Architecture{}};
  ScheduleConfig schedule;
  Provenance provenance;
};

/// Parameters are written as shortest round-trip decimals, so a load restores
/// them bit for bit.
nlohmann::json to_json(const Checkpoint& c);
/// Rejects unknown versions and parameter arrays that do not fit the architecture.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rgu::app
