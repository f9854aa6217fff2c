#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctl/checkpoint.hpp"
#include "ctl/data_view.hpp"
#include "ctl/feature_table.hpp"
#include "ctl/model.hpp"
#include "ctl/train_config.hpp"

namespace ctl {

// A training sample: scene + positive + a same-category negative.
struct Triplet {
  PairSample pair;
  std::string neg_product;
};

// (scene, positive) uniform over training pairs; negative uniform over the
// category's catalog excluding the positive.
std::vector<Triplet> sample_batch(const std::vector<PairSample>& train_pairs,
                                  const Catalog& catalog, Rng& rng, int n);

inline double hinge_loss(double d_pos, double d_neg, double margin) {
  const double v = d_pos - d_neg + margin;
  return v > 0.0 ? v : 0.0;
}

// Feature rows gathered for one batch. The global-net block holds scenes
// (when the variant uses the global distance), then positives, then
// negatives; region rows hold each triplet's scene map back to back.
struct BatchFeatures {
  Mat global_rows;
  int scene_offset = -1;  // -1 when the variant never embeds scenes
  int pos_offset = 0;
  int neg_offset = 0;
  Mat regions;  // (b * k) x d2; empty when the local path is unused
  std::vector<int> category_ids;
  int b = 0;
  int k = 0;
};

BatchFeatures gather_batch(const std::vector<Triplet>& triplets,
                           const FeatureTable& features, Variant variant);

struct BatchMasks {
  Mat global, local, attn;  // empty when the corresponding net does not run
};

// Draws masks only for the nets the variant runs; the mask stream is
// independent of the sampler stream so variants share triplet sequences.
BatchMasks draw_batch_masks(const BatchFeatures& bf, Variant variant,
                            int hidden_dim, double dropout, Rng& rng);

// Which paths a variant exercises.
bool uses_global_distance(Variant v);
bool uses_local_distance(Variant v);
bool uses_attention(Variant v);

struct BatchForward {
  ProjCache g, l, a;
  Mat ecat;       // per-triplet normalized category embeddings
  Vec ecat_norm;  // raw category row norms
  std::vector<Vec> attn;
  Vec d_g_pos, d_g_neg, d_l_pos, d_l_neg, d_pos, d_neg;
  std::vector<bool> active;
  double loss = 0.0;
};

// Mean hinge loss over the batch. Train mode uses batch statistics and the
// provided dropout masks; it does not mutate the head (running-stat updates
// happen in the training loop), so the same inputs always reproduce the
// same loss — the property the finite-difference oracle relies on.
BatchForward forward_batch(const Head& head, const BatchFeatures& bf,
                           const BatchMasks* masks, bool train, double margin);

struct HeadGrads {
  ProjectionGrads global, local, attn;
  Mat categories;
};

// Analytic gradients of the batch loss for every trainable tensor: chain
// rule through the hinge, the distance mixture, the attentive sum, softmax,
// squared distances, L2 normalization, dropout, ReLU, batch norm, and both
// linear layers. Inactive triplets contribute exactly zero.
HeadGrads backward_batch(const Head& head, const BatchFeatures& bf,
                         const BatchForward& fwd);

// Gradient views aligned with trainable_tensors(head) order.
std::vector<std::pair<const double*, std::size_t>> grad_tensors(
    const Head& head, const HeadGrads& grads);

void adam_step(Head& head, const HeadGrads& grads, AdamState& state,
               const TrainConfig& cfg);

// ---- the training loop -----------------------------------------------------

struct TrainInputs {
  std::vector<PairSample> train_pairs, val_pairs;
  Catalog train_catalog, val_catalog;
  const FeatureTable* features = nullptr;
  int n_categories = 0;
};

TrainInputs make_train_inputs(const DataView& view, const FeatureTable& features);

struct EpochStat {
  int epoch;
  double mean_loss;
};
struct ValStat {
  int epoch;
  double accuracy;
};
struct TrainHistory {
  std::vector<EpochStat> epochs;
  std::vector<ValStat> validations;
};

struct TrainResult {
  Checkpoint best;         // highest validation accuracy, earliest on ties
  Checkpoint final_state;  // end-of-run state, resumable
  TrainHistory history;
};

// Bit-reproducible under cfg.seed. Validates every validate_every epochs
// (and at the last epoch), keeping the best checkpoint by validation
// accuracy. Resuming from a final_state checkpoint replays the exact
// trajectory of the uninterrupted run.
TrainResult train(const TrainConfig& cfg, const TrainInputs& data,
                  const std::optional<Checkpoint>& resume = std::nullopt);

void write_history_csv(const std::string& path, const TrainHistory& history);

}  // namespace ctl
