#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctl/features.hpp"
#include "ctl/linalg.hpp"
#include "ctl/rng.hpp"

namespace ctl {

// Model variants: the full hybrid model, global-only, local-only, and the
// hybrid with uniform (attention-free) region weights.
enum class Variant { hybrid, global_only, local_only, hybrid_uniform };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

// One two-layer projection network: Linear - BatchNorm - ReLU - Dropout -
// Linear - L2Norm. Maps a frozen visual feature to a unit-length style
// embedding.
struct ProjectionParams {
  Mat w1;  // in x hidden
  Vec b1;
  Vec gamma, beta;
  Vec running_mean, running_var;
  Mat w2;  // hidden x out
  Vec b2;

  int in_dim() const { return w1.rows; }
  int hidden_dim() const { return w1.cols; }
  int out_dim() const { return w2.cols; }
};

struct HeadConfig {
  FeatureSpec spec;
  int embed_dim = 128;
  int n_categories = 0;
  Variant variant = Variant::hybrid;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  double dropout = 0.5;

  int hidden_dim() const { return 4 * embed_dim; }
};

// The trainable head: three projections (globals, regions, attention
// regions) plus the raw category table (normalized on read).
struct Head {
  HeadConfig cfg;
  ProjectionParams global_net;  // inputs: d1 vectors
  ProjectionParams local_net;   // inputs: d2 region vectors
  ProjectionParams attn_net;    // inputs: d2 region vectors
  Mat categories;               // C x d raw rows
};

// He fan-in init for the linear layers, unit/zero batch-norm, standard
// normal category rows.
Head init_head(const HeadConfig& cfg, Rng& rng);

// ---- projection network forward/backward -------------------------------

struct ProjCache {
  Mat x;         // input rows
  Mat xhat;      // batch-normalized pre-activation
  Mat relu_out;  // after ReLU
  Mat mask;      // dropout keep mask (empty in eval mode)
  Mat dropped;   // after dropout scaling
  Mat y;         // unit-norm outputs
  Vec mu, var;   // batch statistics (train) or running stats (eval)
  Vec z2_norm;   // pre-normalization row norms
  double keep = 1.0;  // dropout keep probability used in the forward pass
  bool train_mode = false;
};

// `dropout_mask` must be a 0/1 matrix of shape N x hidden when training;
// eval mode ignores it. Throws DegenerateNorm if a pre-normalization row
// norm falls below 1e-12.
ProjCache project_forward(const ProjectionParams& p, const Mat& x, bool train,
                          const Mat* dropout_mask, double dropout_rate,
                          double bn_eps);

struct ProjectionGrads {
  Mat w1;
  Vec b1, gamma, beta;
  Mat w2;
  Vec b2;
};

ProjectionGrads zero_projection_grads(const ProjectionParams& p);

// Accumulates parameter gradients for d(loss)/d(y) = g_y. Gradients w.r.t.
// the (frozen) inputs are not produced.
void project_backward(const ProjectionParams& p, const ProjCache& cache,
                      const Mat& g_y, double bn_eps, ProjectionGrads& out);

Mat draw_dropout_mask(int rows, int cols, double dropout_rate, Rng& rng);

void update_running_stats(ProjectionParams& p, const Vec& mu, const Vec& var,
                          double momentum);

// Single-vector convenience form of the projection op. Train mode uses the
// single row as its batch and updates running statistics.
Vec project(ProjectionParams& p, const Vec& x, bool train, Rng* rng,
            double dropout_rate, double bn_eps, double bn_momentum);
Vec project_eval(const ProjectionParams& p, const Vec& x, double bn_eps);

// ---- compatibility measurement ------------------------------------------

// Unit-normalized category row.
Vec normalized_category(const Mat& table, int category_id);

// Softmax over negated squared distances between region embeddings and the
// category embedding, max-subtracted for stability.
Vec attention_weights(const Mat& region_hat_embeds, const Vec& cat_embed);

// Squared L2 distance between two unit embeddings; in [0, 4].
double d_global(const Vec& f_s, const Vec& f_p);

// Attention-weighted sum of per-region squared distances; in [0, 4].
double d_local(const Mat& region_embeds, const Vec& f_p, const Vec& attn);

struct CompatibilityScore {
  double global = 0.0;
  double local = 0.0;
  double hybrid = 0.0;
  Vec attention;
};

// Eval-mode scoring of one (scene, product, category) triple. The variant
// only affects attention (uniform for hybrid_uniform); all three distances
// are always reported and hybrid = (global + local) / 2 exactly.
CompatibilityScore score_pair(const Head& head, const SceneFeatures& scene,
                              const GlobalFeature& product, int category_id);

// Train-mode scoring; applies dropout from `rng` and updates running
// statistics with each projection's rows as the batch.
CompatibilityScore score_pair_train(Head& head, const SceneFeatures& scene,
                                    const GlobalFeature& product,
                                    int category_id, Rng& rng);

// The ranking value a variant exposes to comparisons.
double variant_score(const CompatibilityScore& s, Variant v);

// ---- parameter enumeration -----------------------------------------------

struct NamedTensor {
  std::string name;
  double* data;
  std::vector<int> shape;
  std::size_t size;
};

// Trainable parameters in fixed order (three nets, then categories).
std::vector<NamedTensor> trainable_tensors(Head& head);
// Trainables plus batch-norm running statistics.
std::vector<NamedTensor> state_tensors(Head& head);

Vec to_vec(const float* data, int n);

}  // namespace ctl
