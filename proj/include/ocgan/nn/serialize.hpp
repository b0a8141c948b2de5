#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ocgan/nn/tensor.hpp"

namespace ocgan::nn {

/// Versioned binary container: a kind tag, a JSON config blob, and named
/// double tensors. Used for every model checkpoint in the project.
struct Checkpoint {
  std::string kind;
  std::string config_json;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& config_json,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors);

Checkpoint load_checkpoint(const std::string& path);

/// Copy checkpoint tensors into a module's named state; throws on any
/// missing name or shape mismatch.
void restore_state(const Checkpoint& ckpt,
                   const std::vector<std::pair<std::string, Tensor*>>& state);

}  // namespace ocgan::nn
