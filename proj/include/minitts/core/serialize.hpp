#pragma once

#include <string>

#include <json.hpp>

#include "minitts/core/autograd.hpp"

namespace minitts {

// Checkpoint container: a versioned binary file holding a JSON metadata blob
// (model kind, config, tags) followed by named double matrices.
struct Checkpoint {
  std::string kind;        // "codec", "t2s", "s2m"
  nlohmann::json meta;     // model config; must round-trip through JSON
  ParamStore params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace minitts
