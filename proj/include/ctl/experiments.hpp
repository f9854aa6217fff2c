#pragma once

#include <map>
#include <vector>

#include "ctl/eval.hpp"
#include "ctl/training.hpp"

namespace ctl {

// Trains the four variants (G+L, G, L, G+L0) from the same seed and reports
// binary accuracy on the given question set.
struct AblationRun {
  std::map<std::string, double> accuracy;       // variant name -> accuracy
  std::map<std::string, Checkpoint> checkpoints;  // variant name -> best
};

AblationRun run_ablations(const TrainConfig& base, const TrainInputs& data,
                          const std::vector<BinaryQuestion>& questions);

// IBR-style baseline: a plain linear map A trained with the same triplet
// hinge loss on ||A v_s - A v_p||^2 (no nonlinearity, no attention).
Mat train_linear_metric(const TrainConfig& cfg, const TrainInputs& data,
                        int out_dim);

// Analytic gradient of the mean batch hinge loss w.r.t. A; exposed for the
// finite-difference oracle.
Mat linear_metric_grad(const Mat& a, const std::vector<Triplet>& triplets,
                       const FeatureTable& features, double margin);
double linear_metric_loss(const Mat& a, const std::vector<Triplet>& triplets,
                          const FeatureTable& features, double margin);

}  // namespace ctl
