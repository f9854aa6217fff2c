#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctl/model.hpp"
#include "ctl/train_config.hpp"

namespace ctl {

// Adam moment estimates, aligned with trainable_tensors(head) order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<Vec> m;
  std::vector<Vec> v;
};

AdamState init_adam(Head& head);

// Full training state: parameters (with batch-norm running statistics),
// optimizer moments, and both RNG streams, so a resumed run replays the
// exact trajectory of an uninterrupted one.
struct Checkpoint {
  TrainConfig config;
  HeadConfig head_cfg;
  std::int64_t epoch = 0;
  double val_accuracy = -1.0;
  Head head;
  AdamState adam;
  std::string sampler_rng;
  std::string dropout_rng;
};

// The on-disk bytes; save/load round-trips are bitwise.
std::string serialize_checkpoint(const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

inline bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b) {
  return serialize_checkpoint(a) == serialize_checkpoint(b);
}

// Zero-filled head with the config's shapes (used when loading).
Head allocate_head(const HeadConfig& cfg);

}  // namespace ctl
