#include "ctl/experiments.hpp"

#include <cmath>

#include "ctl/errors.hpp"

namespace ctl {

AblationRun run_ablations(const TrainConfig& base, const TrainInputs& data,
                          const std::vector<BinaryQuestion>& questions) {
  AblationRun out;
  for (Variant v : {Variant::hybrid, Variant::global_only, Variant::local_only,
                    Variant::hybrid_uniform}) {
    TrainConfig cfg = base;
    cfg.variant = v;
    TrainResult result = train(cfg, data);
    ModelScorer scorer(result.best.head, *data.features);
    out.accuracy[to_string(v)] = binary_accuracy(scorer, questions);
    out.checkpoints[to_string(v)] = std::move(result.best);
  }
  return out;
}

namespace {

// Difference vectors (v_s - v_p) for the positive and negative sides.
struct TripletDiffs {
  Vec pos, neg;
};

TripletDiffs diffs_for(const Triplet& trip, const FeatureTable& features) {
  const auto& s = features.scene(trip.pair.example_index).global.v;
  const auto& pp = features.product(trip.pair.product_id).v;
  const auto& pn = features.product(trip.neg_product).v;
  TripletDiffs d;
  d.pos.resize(s.size());
  d.neg.resize(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    d.pos[j] = static_cast<double>(s[j]) - static_cast<double>(pp[j]);
    d.neg[j] = static_cast<double>(s[j]) - static_cast<double>(pn[j]);
  }
  return d;
}

double mapped_sqnorm(const Mat& a, const Vec& u, Vec* mapped) {
  double acc = 0.0;
  for (int r = 0; r < a.rows; ++r) {
    const double* row = a.row(r);
    double dot = 0.0;
    for (int c = 0; c < a.cols; ++c) dot += row[c] * u[c];
    if (mapped != nullptr) (*mapped)[r] = dot;
    acc += dot * dot;
  }
  return acc;
}

}  // namespace

double linear_metric_loss(const Mat& a, const std::vector<Triplet>& triplets,
                          const FeatureTable& features, double margin) {
  double loss = 0.0;
  for (const auto& trip : triplets) {
    const TripletDiffs d = diffs_for(trip, features);
    const double d_pos = mapped_sqnorm(a, d.pos, nullptr);
    const double d_neg = mapped_sqnorm(a, d.neg, nullptr);
    loss += hinge_loss(d_pos, d_neg, margin);
  }
  return loss / static_cast<double>(triplets.size());
}

Mat linear_metric_grad(const Mat& a, const std::vector<Triplet>& triplets,
                       const FeatureTable& features, double margin) {
  Mat grad(a.rows, a.cols);
  const double inv_b = 1.0 / static_cast<double>(triplets.size());
  Vec mapped_pos(a.rows), mapped_neg(a.rows);
  for (const auto& trip : triplets) {
    const TripletDiffs d = diffs_for(trip, features);
    const double d_pos = mapped_sqnorm(a, d.pos, &mapped_pos);
    const double d_neg = mapped_sqnorm(a, d.neg, &mapped_neg);
    if (d_pos - d_neg + margin <= 0.0) continue;
    // d/dA ||A u||^2 = 2 (A u) u^T.
    for (int r = 0; r < a.rows; ++r) {
      double* grow = grad.row(r);
      const double gp = 2.0 * inv_b * mapped_pos[r];
      const double gn = 2.0 * inv_b * mapped_neg[r];
      for (int c = 0; c < a.cols; ++c) {
        grow[c] += gp * d.pos[c] - gn * d.neg[c];
      }
    }
  }
  return grad;
}

Mat train_linear_metric(const TrainConfig& cfg, const TrainInputs& data,
                        int out_dim) {
  if (data.features == nullptr || data.train_pairs.empty()) {
    throw UsageError("linear-metric baseline needs training data");
  }
  const int d1 = data.features->spec.d1;
  Rng init_rng(derive_seed(cfg.seed, 21));
  Mat a(out_dim, d1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d1));
  for (auto& w : a.a) w = init_rng.normal() * scale;

  Rng sampler(derive_seed(cfg.seed, 22));
  Vec m(a.size(), 0.0), v(a.size(), 0.0);
  std::int64_t step = 0;
  const int steps_per_epoch =
      static_cast<int>((data.train_pairs.size() + cfg.batch_size - 1) /
                       cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s) {
      const auto triplets = sample_batch(data.train_pairs, data.train_catalog,
                                         sampler, cfg.batch_size);
      const Mat grad =
          linear_metric_grad(a, triplets, *data.features, cfg.margin);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < a.size(); ++j) {
        m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * grad.a[j];
        v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * grad.a[j] * grad.a[j];
        a.a[j] -= cfg.learning_rate * (m[j] / bc1) /
                  (std::sqrt(v[j] / bc2) + cfg.adam_eps);
      }
    }
  }
  return a;
}

}  // namespace ctl
