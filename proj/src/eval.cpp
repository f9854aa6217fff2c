#include "ctl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ctl/errors.hpp"
#include "ctl/hashing.hpp"
#include "ctl/rng.hpp"

namespace ctl {

namespace {

// Uniform draw from catalog[category] excluding `pos`. The positive is
// located first so the remaining ids stay uniform.
std::string draw_negative(const std::vector<std::string>& products,
                          const std::string& pos, Rng& rng) {
  if (products.size() < 2) {
    throw SingletonCategoryError(
        "category needs at least two products to sample a negative");
  }
  const auto it = std::find(products.begin(), products.end(), pos);
  if (it == products.end()) {
    // Positive outside the catalog: all entries are valid negatives.
    return products[rng.below(products.size())];
  }
  const std::size_t pos_idx =
      static_cast<std::size_t>(std::distance(products.begin(), it));
  std::size_t j = rng.below(products.size() - 1);
  if (j >= pos_idx) ++j;
  return products[j];
}

}  // namespace

std::vector<BinaryQuestion> make_questions(const std::vector<PairSample>& pairs,
                                           const Catalog& catalog,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<BinaryQuestion> questions;
  questions.reserve(pairs.size());
  for (const auto& p : pairs) {
    questions.push_back(
        BinaryQuestion{p, draw_negative(catalog[p.category_id], p.product_id,
                                        rng)});
  }
  return questions;
}

std::vector<BinaryQuestion> enumerate_all_questions(
    const std::vector<PairSample>& pairs, const Catalog& catalog) {
  std::vector<BinaryQuestion> questions;
  for (const auto& p : pairs) {
    for (const auto& candidate : catalog[p.category_id]) {
      if (candidate == p.product_id) continue;
      questions.push_back(BinaryQuestion{p, candidate});
    }
  }
  return questions;
}

double binary_accuracy(const Scorer& scorer,
                       const std::vector<BinaryQuestion>& questions) {
  if (questions.empty()) {
    throw UsageError("binary accuracy over an empty question set");
  }
  double credit = 0.0;
  for (const auto& q : questions) {
    const double pos = scorer.score(q.pair, q.pair.product_id);
    const double neg = scorer.score(q.pair, q.neg_product);
    if (pos < neg) {
      credit += 1.0;
    } else if (pos == neg) {
      credit += 0.5;
    }
  }
  return credit / static_cast<double>(questions.size());
}

std::map<int, std::pair<double, std::int64_t>> per_category_accuracy(
    const Scorer& scorer, const std::vector<BinaryQuestion>& questions) {
  std::map<int, std::pair<double, std::int64_t>> acc;
  for (const auto& q : questions) {
    const double pos = scorer.score(q.pair, q.pair.product_id);
    const double neg = scorer.score(q.pair, q.neg_product);
    auto& [credit, n] = acc[q.pair.category_id];
    if (pos < neg) {
      credit += 1.0;
    } else if (pos == neg) {
      credit += 0.5;
    }
    ++n;
  }
  for (auto& [cat, entry] : acc) {
    entry.first /= static_cast<double>(entry.second);
  }
  return acc;
}

AucCheck auc_equivalence_check(const Scorer& scorer,
                               const std::vector<PairSample>& pairs,
                               const Catalog& catalog) {
  double pairwise_credit = 0.0;
  std::int64_t pairwise_n = 0;
  double rank_credit = 0.0;  // per-query AUC weighted by its negative count

  for (const auto& p : pairs) {
    const auto& pool = catalog[p.category_id];
    const double pos_score = scorer.score(p, p.product_id);

    // Route (a): explicit comparisons.
    std::vector<double> neg_scores;
    for (const auto& candidate : pool) {
      if (candidate == p.product_id) continue;
      const double s = scorer.score(p, candidate);
      neg_scores.push_back(s);
      if (pos_score < s) {
        pairwise_credit += 1.0;
      } else if (pos_score == s) {
        pairwise_credit += 0.5;
      }
      ++pairwise_n;
    }
    if (neg_scores.empty()) continue;

    // Route (b): the positive's average rank among all candidates.
    std::int64_t below = 0, tied = 0;
    for (double s : neg_scores) {
      if (s < pos_score) ++below;
      if (s == pos_score) ++tied;
    }
    const double avg_rank = 1.0 + below + tied / 2.0;
    const double n_total = static_cast<double>(neg_scores.size()) + 1.0;
    const double auc_q =
        (n_total - avg_rank) / static_cast<double>(neg_scores.size());
    rank_credit += auc_q * static_cast<double>(neg_scores.size());
  }

  AucCheck out;
  out.pairwise_accuracy = pairwise_credit / static_cast<double>(pairwise_n);
  out.rank_auc = rank_credit / static_cast<double>(pairwise_n);
  return out;
}

std::vector<std::pair<int, double>> topk_accuracy(
    const Scorer& scorer, const std::vector<PairSample>& pairs,
    const Catalog& catalog, const std::vector<int>& ks) {
  std::vector<std::int64_t> hits(ks.size(), 0);
  for (const auto& p : pairs) {
    const auto& pool = catalog[p.category_id];
    std::vector<std::pair<double, std::string>> ranked;
    ranked.reserve(pool.size());
    for (const auto& candidate : pool) {
      ranked.emplace_back(scorer.score(p, candidate), candidate);
    }
    std::sort(ranked.begin(), ranked.end());
    int rank = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (ranked[i].second == p.product_id) {
        rank = static_cast<int>(i) + 1;
        break;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (rank >= 1 && rank <= ks[i]) ++hits[i];
    }
  }
  std::vector<std::pair<int, double>> curve;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    curve.emplace_back(ks[i],
                       static_cast<double>(hits[i]) /
                           static_cast<double>(pairs.size()));
  }
  return curve;
}

std::vector<BBox> boxes_in_crop(const BBox& crop,
                                const std::vector<BBox>& scene_boxes) {
  std::vector<BBox> out;
  for (const auto& b : scene_boxes) {
    const BBox clipped{std::max(b.x0, crop.x0), std::max(b.y0, crop.y0),
                       std::min(b.x1, crop.x1), std::min(b.y1, crop.y1)};
    if (!clipped.valid()) continue;
    out.push_back(BBox{(clipped.x0 - crop.x0) / crop.width(),
                       (clipped.y0 - crop.y0) / crop.height(),
                       (clipped.x1 - crop.x0) / crop.width(),
                       (clipped.y1 - crop.y0) / crop.height()});
  }
  return out;
}

std::vector<bool> relevant_cells(int w, int h,
                                 const std::vector<BBox>& crop_boxes,
                                 double min_overlap) {
  std::vector<bool> relevant(static_cast<std::size_t>(w) * h, false);
  for (int gy = 0; gy < h; ++gy) {
    for (int gx = 0; gx < w; ++gx) {
      const BBox cell{static_cast<double>(gx) / w, static_cast<double>(gy) / h,
                      static_cast<double>(gx + 1) / w,
                      static_cast<double>(gy + 1) / h};
      for (const auto& b : crop_boxes) {
        if (overlap_fraction(cell, b) >= min_overlap) {
          relevant[static_cast<std::size_t>(gy) * w + gx] = true;
          break;
        }
      }
    }
  }
  return relevant;
}

namespace {

// P(no relevant cell among the first `take` of a uniform permutation).
double miss_probability(int k, int r, int take) {
  double p = 1.0;
  for (int i = 0; i < take; ++i) {
    if (k - r - i <= 0) return 0.0;
    p *= static_cast<double>(k - r - i) / static_cast<double>(k - i);
  }
  return p;
}

}  // namespace

AttentionHitStats attention_hit_rate(const std::vector<Vec>& attention,
                                     const std::vector<std::vector<bool>>& relevance,
                                     int mc_trials, std::uint64_t mc_seed) {
  if (attention.size() != relevance.size()) {
    throw ShapeError("attention/relevance example counts differ");
  }
  AttentionHitStats stats;
  Rng rng(mc_seed);

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    const auto r = static_cast<int>(
        std::count(relevance[i].begin(), relevance[i].end(), true));
    if (r == 0) {
      ++stats.excluded;
    } else {
      kept.push_back(i);
    }
  }
  stats.evaluated = static_cast<std::int64_t>(kept.size());
  if (kept.empty()) return stats;

  const int trials_per_example = std::max(
      1, static_cast<int>((mc_trials + static_cast<int>(kept.size()) - 1) /
                          static_cast<int>(kept.size())));

  double top1 = 0, top3 = 0, r1a = 0, r3a = 0, r1mc = 0, r3mc = 0;
  for (std::size_t idx : kept) {
    const auto& weights = attention[idx];
    const auto& rel = relevance[idx];
    const int k = static_cast<int>(rel.size());
    const int r = static_cast<int>(std::count(rel.begin(), rel.end(), true));

    // Model ranking: weight descending, index ascending on ties.
    std::vector<int> order(k);
    for (int i = 0; i < k; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&weights](int a, int b) {
      return weights[a] > weights[b];
    });
    if (rel[order[0]]) top1 += 1.0;
    for (int i = 0; i < std::min(3, k); ++i) {
      if (rel[order[i]]) {
        top3 += 1.0;
        break;
      }
    }

    r1a += static_cast<double>(r) / k;
    r3a += 1.0 - miss_probability(k, r, std::min(3, k));

    // Monte Carlo over uniform permutations.
    std::vector<int> perm(k);
    int hits1 = 0, hits3 = 0;
    for (int t = 0; t < trials_per_example; ++t) {
      for (int i = 0; i < k; ++i) perm[i] = i;
      rng.shuffle(perm);
      if (rel[perm[0]]) ++hits1;
      for (int i = 0; i < std::min(3, k); ++i) {
        if (rel[perm[i]]) {
          ++hits3;
          break;
        }
      }
    }
    r1mc += static_cast<double>(hits1) / trials_per_example;
    r3mc += static_cast<double>(hits3) / trials_per_example;
  }

  const double n = static_cast<double>(kept.size());
  stats.top1 = top1 / n;
  stats.top3 = top3 / n;
  stats.random_top1_analytic = r1a / n;
  stats.random_top3_analytic = r3a / n;
  stats.random_top1_mc = r1mc / n;
  stats.random_top3_mc = r3mc / n;
  return stats;
}

// ---- scorers ---------------------------------------------------------------

ModelScorer::ModelScorer(const Head& head, const FeatureTable& features)
    : head_(head), features_(features) {}

const ModelScorer::SceneCtx& ModelScorer::scene_ctx(int example_index) const {
  auto it = scene_cache_.find(example_index);
  if (it != scene_cache_.end()) return it->second;

  const SceneFeatures& feats = features_.scene(example_index);
  SceneCtx ctx;
  ctx.f_s = project_eval(head_.global_net,
                         to_vec(feats.global.v.data(), head_.cfg.spec.d1),
                         head_.cfg.bn_eps);
  Mat regions(feats.map.cells(), feats.map.d2);
  for (int i = 0; i < feats.map.cells(); ++i) {
    const float* cell = feats.map.cell(i);
    for (int j = 0; j < feats.map.d2; ++j) {
      regions(i, j) = static_cast<double>(cell[j]);
    }
  }
  ctx.region_embeds =
      project_forward(head_.local_net, regions, false, nullptr, 0.0,
                      head_.cfg.bn_eps)
          .y;
  ctx.region_hat_embeds =
      project_forward(head_.attn_net, regions, false, nullptr, 0.0,
                      head_.cfg.bn_eps)
          .y;
  return scene_cache_.emplace(example_index, std::move(ctx)).first->second;
}

const Vec& ModelScorer::product_embed(const std::string& product_id) const {
  auto it = product_cache_.find(product_id);
  if (it != product_cache_.end()) return it->second;
  const GlobalFeature& g = features_.product(product_id);
  Vec f_p = project_eval(head_.global_net,
                         to_vec(g.v.data(), head_.cfg.spec.d1),
                         head_.cfg.bn_eps);
  return product_cache_.emplace(product_id, std::move(f_p)).first->second;
}

Vec ModelScorer::attention_for(const PairSample& scene_pair) const {
  const SceneCtx& ctx = scene_ctx(scene_pair.example_index);
  const int k = ctx.region_embeds.rows;
  if (head_.cfg.variant == Variant::hybrid_uniform) {
    return Vec(k, 1.0 / k);
  }
  auto it = ctx.attention_by_category.find(scene_pair.category_id);
  if (it != ctx.attention_by_category.end()) return it->second;
  const Vec e_c = normalized_category(head_.categories, scene_pair.category_id);
  Vec attn = attention_weights(ctx.region_hat_embeds, e_c);
  const_cast<SceneCtx&>(ctx).attention_by_category[scene_pair.category_id] =
      attn;
  return attn;
}

double ModelScorer::score(const PairSample& scene_pair,
                          const std::string& product_id) const {
  const SceneCtx& ctx = scene_ctx(scene_pair.example_index);
  const Vec& f_p = product_embed(product_id);
  CompatibilityScore s;
  s.attention = attention_for(scene_pair);
  s.global = d_global(ctx.f_s, f_p);
  s.local = d_local(ctx.region_embeds, f_p, s.attention);
  s.hybrid = (s.global + s.local) / 2.0;
  return variant_score(s, head_.cfg.variant);
}

std::string ModelScorer::describe() const {
  return std::string("model:") + to_string(head_.cfg.variant);
}

PopularityScorer::PopularityScorer(const std::vector<PairSample>& train_pairs) {
  for (const auto& p : train_pairs) ++counts_[p.product_id];
}

double PopularityScorer::score(const PairSample&,
                               const std::string& product_id) const {
  auto it = counts_.find(product_id);
  const std::int64_t count = it == counts_.end() ? 0 : it->second;
  return -static_cast<double>(count);
}

RawFeatureScorer::RawFeatureScorer(const FeatureTable& features)
    : features_(features) {}

double RawFeatureScorer::score(const PairSample& scene_pair,
                               const std::string& product_id) const {
  const auto& s = features_.scene(scene_pair.example_index).global.v;
  const auto& p = features_.product(product_id).v;
  double acc = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double d = static_cast<double>(s[j]) - static_cast<double>(p[j]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

LinearMetricScorer::LinearMetricScorer(Mat a, const FeatureTable& features)
    : a_(std::move(a)), features_(features) {}

double LinearMetricScorer::score(const PairSample& scene_pair,
                                 const std::string& product_id) const {
  auto transform = [this](const std::vector<float>& v,
                          const std::string& key) -> const Vec& {
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Vec out(a_.rows, 0.0);
    for (int r = 0; r < a_.rows; ++r) {
      const double* row = a_.row(r);
      double acc = 0.0;
      for (int c = 0; c < a_.cols; ++c) acc += row[c] * v[c];
      out[r] = acc;
    }
    return cache_.emplace(key, std::move(out)).first->second;
  };
  const Vec& s = transform(features_.scene(scene_pair.example_index).global.v,
                           "s#" + std::to_string(scene_pair.example_index));
  const Vec& p =
      transform(features_.product(product_id).v, "p#" + product_id);
  double acc = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double d = s[j] - p[j];
    acc += d * d;
  }
  return acc;
}

double HashRandomScorer::score(const PairSample& scene_pair,
                               const std::string& product_id) const {
  const std::string key = scene_pair.scene_id + "\x1f" +
                          std::to_string(scene_pair.example_index) + "\x1f" +
                          product_id;
  const std::uint64_t h = splitmix64(fnv1a64(key) ^ seed_);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// ---- report ---------------------------------------------------------------

void write_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["scorer"] = report.scorer;
  j["binary_accuracy"] = report.binary_acc;
  j["n_questions"] = report.n_questions;
  j["per_category"] = report.per_category;
  j["per_category_n"] = report.per_category_n;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [k, acc] : report.topk) {
    curve.push_back({{"k", k}, {"accuracy", acc}});
  }
  j["topk"] = curve;
  if (report.attention.has_value()) {
    const auto& a = *report.attention;
    j["attention"] = {{"top1", a.top1},
                      {"top3", a.top3},
                      {"random_top1_analytic", a.random_top1_analytic},
                      {"random_top3_analytic", a.random_top3_analytic},
                      {"random_top1_mc", a.random_top1_mc},
                      {"random_top3_mc", a.random_top3_mc},
                      {"evaluated", a.evaluated},
                      {"excluded", a.excluded}};
  }
  j["eval_seed"] = report.eval_seed;
  j["config_hash"] = report.config_hash;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

std::string format_report_text(const EvalReport& report) {
  std::ostringstream os;
  os << "scorer: " << report.scorer << "\n";
  os << "binary accuracy: " << report.binary_acc << " over "
     << report.n_questions << " questions\n";
  if (!report.per_category.empty()) {
    os << "per-category accuracy:\n";
    for (const auto& [name, acc] : report.per_category) {
      os << "  " << name << ": " << acc << " (n="
         << report.per_category_n.at(name) << ")\n";
    }
  }
  if (!report.topk.empty()) {
    os << "top-k accuracy:\n";
    for (const auto& [k, acc] : report.topk) {
      os << "  K=" << k << ": " << acc << "\n";
    }
  }
  if (report.attention.has_value()) {
    const auto& a = *report.attention;
    os << "attention hits: top1=" << a.top1 << " top3=" << a.top3
       << " (random top1 " << a.random_top1_analytic << " analytic / "
       << a.random_top1_mc << " mc; random top3 " << a.random_top3_analytic
       << " analytic / " << a.random_top3_mc << " mc; evaluated "
       << a.evaluated << ", excluded " << a.excluded << ")\n";
  }
  return os.str();
}

void write_topk_csv(const std::string& path,
                    const std::vector<std::pair<int, double>>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "K,accuracy\n";
  for (const auto& [k, acc] : curve) {
    out << k << "," << acc << "\n";
  }
}

void write_attention_pgm(const std::string& path, const Vec& weights, int w,
                         int h) {
  if (static_cast<int>(weights.size()) != w * h) {
    throw ShapeError("attention map size does not match the grid");
  }
  const double mx = *std::max_element(weights.begin(), weights.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  for (double v : weights) {
    const int scaled =
        mx > 0.0 ? static_cast<int>(std::lround(255.0 * v / mx)) : 0;
    out.put(static_cast<char>(std::clamp(scaled, 0, 255)));
  }
}

}  // namespace ctl
