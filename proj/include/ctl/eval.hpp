#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctl/data_view.hpp"
#include "ctl/feature_table.hpp"
#include "ctl/model.hpp"

namespace ctl {

// A "which product goes better with this scene" comparison; the positive is
// the pair's ground-truth product, the negative a same-category draw.
struct BinaryQuestion {
  PairSample pair;
  std::string neg_product;
};

// Lower score = more compatible, uniformly across scorer kinds.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const PairSample& scene_pair,
                       const std::string& product_id) const = 0;
  virtual std::string describe() const = 0;
};

// One question per pair, negative drawn uniformly from the category's
// catalog excluding the positive.
std::vector<BinaryQuestion> make_questions(const std::vector<PairSample>& pairs,
                                           const Catalog& catalog,
                                           std::uint64_t seed);

// Every (positive, negative) combination; the exhaustive question set whose
// accuracy is the AUC.
std::vector<BinaryQuestion> enumerate_all_questions(
    const std::vector<PairSample>& pairs, const Catalog& catalog);

// Fraction of questions with score(pos) < score(neg); exact ties earn 0.5.
double binary_accuracy(const Scorer& scorer,
                       const std::vector<BinaryQuestion>& questions);

// Accuracy grouped by the question's category id.
std::map<int, std::pair<double, std::int64_t>> per_category_accuracy(
    const Scorer& scorer, const std::vector<BinaryQuestion>& questions);

// Two routes to the same number: exhaustive pairwise comparisons vs the
// positive's rank among all candidates (average rank over ties).
struct AucCheck {
  double pairwise_accuracy = 0.0;
  double rank_auc = 0.0;
};
AucCheck auc_equivalence_check(const Scorer& scorer,
                               const std::vector<PairSample>& pairs,
                               const Catalog& catalog);

// For each K: fraction of pairs whose positive lands in the K lowest-scored
// candidates of its category pool; ties broken by product id.
std::vector<std::pair<int, double>> topk_accuracy(
    const Scorer& scorer, const std::vector<PairSample>& pairs,
    const Catalog& catalog, const std::vector<int>& ks);

// ---- attention-region evaluation -----------------------------------------

// Product boxes intersected with the crop and re-expressed in crop-relative
// [0,1] coordinates; empty intersections are dropped.
std::vector<BBox> boxes_in_crop(const BBox& crop,
                                const std::vector<BBox>& scene_boxes);

// Grid cells overlapping any box by at least `min_overlap` of a cell.
std::vector<bool> relevant_cells(int w, int h,
                                 const std::vector<BBox>& crop_boxes,
                                 double min_overlap);

struct AttentionHitStats {
  double top1 = 0.0;
  double top3 = 0.0;
  double random_top1_analytic = 0.0;
  double random_top3_analytic = 0.0;
  double random_top1_mc = 0.0;
  double random_top3_mc = 0.0;
  std::int64_t evaluated = 0;
  std::int64_t excluded = 0;
};

// `attention` and `relevance` are aligned per example; examples with no
// relevant cell are excluded from every rate. The random rows rank cells by
// a seeded permutation, reported analytically and by Monte Carlo.
AttentionHitStats attention_hit_rate(const std::vector<Vec>& attention,
                                     const std::vector<std::vector<bool>>& relevance,
                                     int mc_trials, std::uint64_t mc_seed);

// ---- scorers ---------------------------------------------------------------

class ModelScorer : public Scorer {
 public:
  ModelScorer(const Head& head, const FeatureTable& features);
  double score(const PairSample& scene_pair,
               const std::string& product_id) const override;
  std::string describe() const override;

  // Attention weights the model assigns to an example's regions.
  Vec attention_for(const PairSample& scene_pair) const;

 private:
  struct SceneCtx {
    Vec f_s;
    Mat region_embeds;
    Mat region_hat_embeds;
    std::map<int, Vec> attention_by_category;
  };
  const SceneCtx& scene_ctx(int example_index) const;
  const Vec& product_embed(const std::string& product_id) const;

  const Head& head_;
  const FeatureTable& features_;
  mutable std::map<int, SceneCtx> scene_cache_;
  mutable std::map<std::string, Vec> product_cache_;
};

// score = -count of the product among training pairs; unseen products count 0.
class PopularityScorer : public Scorer {
 public:
  explicit PopularityScorer(const std::vector<PairSample>& train_pairs);
  double score(const PairSample&, const std::string& product_id) const override;
  std::string describe() const override { return "popularity"; }

 private:
  std::map<std::string, std::int64_t> counts_;
};

// L2 distance between raw backbone globals.
class RawFeatureScorer : public Scorer {
 public:
  explicit RawFeatureScorer(const FeatureTable& features);
  double score(const PairSample& scene_pair,
               const std::string& product_id) const override;
  std::string describe() const override { return "rawfeature"; }

 private:
  const FeatureTable& features_;
};

// ||A v_s - A v_p||^2 for a learned linear map A.
class LinearMetricScorer : public Scorer {
 public:
  LinearMetricScorer(Mat a, const FeatureTable& features);
  double score(const PairSample& scene_pair,
               const std::string& product_id) const override;
  std::string describe() const override { return "linear-metric"; }
  const Mat& transform() const { return a_; }

 private:
  Mat a_;
  const FeatureTable& features_;
  mutable std::map<std::string, Vec> cache_;
};

// Deterministic per-(scene, product) uniform noise; the chance baseline.
class HashRandomScorer : public Scorer {
 public:
  explicit HashRandomScorer(std::uint64_t seed) : seed_(seed) {}
  double score(const PairSample& scene_pair,
               const std::string& product_id) const override;
  std::string describe() const override { return "random"; }

 private:
  std::uint64_t seed_;
};

// ---- report ---------------------------------------------------------------

struct EvalReport {
  std::string scorer;
  double binary_acc = 0.0;
  std::int64_t n_questions = 0;
  std::map<std::string, double> per_category;
  std::map<std::string, std::int64_t> per_category_n;
  std::vector<std::pair<int, double>> topk;
  std::optional<AttentionHitStats> attention;
  std::uint64_t eval_seed = 0;
  std::string config_hash;
};

void write_report_json(const std::string& path, const EvalReport& report);
std::string format_report_text(const EvalReport& report);
void write_topk_csv(const std::string& path,
                    const std::vector<std::pair<int, double>>& curve);
// 7x7 attention map as a P5 graymap scaled by the max weight.
void write_attention_pgm(const std::string& path, const Vec& weights, int w,
                         int h);

}  // namespace ctl
