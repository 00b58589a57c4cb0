#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "macflow/mlp.hpp"

namespace macflow {

// Checkpoint file, version 1:
//
//   line 1   "MACFLOW-CHECKPOINT 1\n"
//   line 2   JSON manifest terminated by '\n':
//              {"version":1,"value_count":N,"networks":[{"name":..,
//               "input":..,"hidden":[..],"output":..,"layer_norm":bool,
//               "activation":"gelu","tensors":[{"name":"l0.weight",
//               "shape":[r,c]},...]}]}
//   payload  N little-endian IEEE-754 float64 values, every tensor of every
//            network in manifest order, each tensor row-major.
struct NamedNetwork {
  std::string name;
  MlpParams params;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedNetwork>& networks);
std::vector<NamedNetwork> load_checkpoint(const std::filesystem::path& path);

const MlpParams& find_network(const std::vector<NamedNetwork>& networks, const std::string& name);

}  // namespace macflow
