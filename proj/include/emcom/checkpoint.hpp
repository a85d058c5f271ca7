#pragma once

// Versioned training checkpoints. A checkpoint carries a self-describing
// architecture header, the parameters flattened to f32 for external tools,
// and the trainer's complete native resume state, all guarded by a CRC32.
// Loading validates version, checksum, and architecture before any state is
// touched, so resuming into a mismatched run fails loudly.

#include <cstdint>
#include <string>
#include <vector>

#include "emcom/language.hpp"
#include "emcom/trainer.hpp"

namespace emcom::ckpt {

struct ArchDescriptor {
  std::string env_name;
  int env_dim = 0;
  int num_actions = 0;
  agent::LanguageSpec lang;
  std::vector<int> hidden;
  bool critic_sees_messages = true;
  double actor_head_scale = 0.01;
  int scalar_width = 4;  // bytes per training scalar
};

// Metadata readable without reconstructing a trainer.
struct CheckpointInfo {
  std::uint32_t version = 0;
  ArchDescriptor arch;
  std::string config_hash;
  int update_index = 0;
  long long global_step = 0;
};

template <class S>
ArchDescriptor describe(const train::Trainer<S>& trainer);

template <class S>
void save_checkpoint(const train::Trainer<S>& trainer, const std::string& config_hash,
                     const std::string& path);

CheckpointInfo read_checkpoint_info(const std::string& path);

// The flattened f32 parameter vector (actor first, then critic; per layer the
// row-major weights then the bias).
std::vector<float> read_checkpoint_params(const std::string& path);

// Restores the trainer's full state. The checkpoint's architecture must match
// the trainer it is loaded into, and when a config hash is given it must
// match the recorded one.
template <class S>
void resume_from_checkpoint(train::Trainer<S>& trainer, const std::string& path,
                            const std::string& expected_config_hash = "");

}  // namespace emcom::ckpt
