#pragma once

#include <cstdint>

#include "ctl/model.hpp"

namespace ctl {

struct TrainConfig {
  double margin = 0.2;
  int batch_size = 16;
  int epochs = 100;
  int validate_every = 10;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  // Validation questions come from their own stream so the selection metric
  // is stable across epochs.
  std::uint64_t eval_seed = 101;
  Variant variant = Variant::hybrid;
  int embed_dim = 128;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace ctl
