#include "ctl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctl/errors.hpp"
#include "ctl/eval.hpp"

namespace ctl {

bool uses_global_distance(Variant v) { return v != Variant::local_only; }
bool uses_local_distance(Variant v) { return v != Variant::global_only; }
bool uses_attention(Variant v) {
  return v == Variant::hybrid || v == Variant::local_only;
}

std::vector<Triplet> sample_batch(const std::vector<PairSample>& train_pairs,
                                  const Catalog& catalog, Rng& rng, int n) {
  if (train_pairs.empty()) {
    throw UsageError("cannot sample triplets from an empty pair set");
  }
  std::vector<Triplet> out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) {
    const PairSample& pair = train_pairs[rng.below(train_pairs.size())];
    const auto& products = catalog[pair.category_id];
    if (products.size() < 2) {
      throw SingletonCategoryError("category id " +
                                   std::to_string(pair.category_id) +
                                   " has fewer than two products");
    }
    const auto it =
        std::find(products.begin(), products.end(), pair.product_id);
    std::string neg;
    if (it == products.end()) {
      neg = products[rng.below(products.size())];
    } else {
      const auto pos_idx =
          static_cast<std::size_t>(std::distance(products.begin(), it));
      std::size_t j = rng.below(products.size() - 1);
      if (j >= pos_idx) ++j;
      neg = products[j];
    }
    out.push_back(Triplet{pair, neg});
  }
  return out;
}

BatchFeatures gather_batch(const std::vector<Triplet>& triplets,
                           const FeatureTable& features, Variant variant) {
  BatchFeatures bf;
  bf.b = static_cast<int>(triplets.size());
  bf.k = features.spec.cells();
  const int d1 = features.spec.d1;
  const int d2 = features.spec.d2;

  const bool with_scenes = uses_global_distance(variant);
  const int n_global = with_scenes ? 3 * bf.b : 2 * bf.b;
  bf.global_rows = Mat(n_global, d1);
  bf.scene_offset = with_scenes ? 0 : -1;
  bf.pos_offset = with_scenes ? bf.b : 0;
  bf.neg_offset = bf.pos_offset + bf.b;

  auto copy_global = [&](int row, const GlobalFeature& g) {
    double* dst = bf.global_rows.row(row);
    for (int j = 0; j < d1; ++j) dst[j] = static_cast<double>(g.v[j]);
  };

  if (uses_local_distance(variant)) {
    bf.regions = Mat(bf.b * bf.k, d2);
  }

  for (int t = 0; t < bf.b; ++t) {
    const Triplet& trip = triplets[t];
    const SceneFeatures& scene = features.scene(trip.pair.example_index);
    if (with_scenes) copy_global(bf.scene_offset + t, scene.global);
    copy_global(bf.pos_offset + t, features.product(trip.pair.product_id));
    copy_global(bf.neg_offset + t, features.product(trip.neg_product));
    if (uses_local_distance(variant)) {
      for (int i = 0; i < bf.k; ++i) {
        const float* cell = scene.map.cell(i);
        double* dst = bf.regions.row(t * bf.k + i);
        for (int j = 0; j < d2; ++j) dst[j] = static_cast<double>(cell[j]);
      }
    }
    bf.category_ids.push_back(trip.pair.category_id);
  }
  return bf;
}

BatchMasks draw_batch_masks(const BatchFeatures& bf, Variant variant,
                            int hidden_dim, double dropout, Rng& rng) {
  BatchMasks masks;
  masks.global =
      draw_dropout_mask(bf.global_rows.rows, hidden_dim, dropout, rng);
  if (uses_local_distance(variant)) {
    masks.local = draw_dropout_mask(bf.regions.rows, hidden_dim, dropout, rng);
  }
  if (uses_attention(variant)) {
    masks.attn = draw_dropout_mask(bf.regions.rows, hidden_dim, dropout, rng);
  }
  return masks;
}

namespace {

double squared_distance(const double* a, const double* b, int d) {
  double acc = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

BatchForward forward_batch(const Head& head, const BatchFeatures& bf,
                           const BatchMasks* masks, bool train, double margin) {
  const Variant variant = head.cfg.variant;
  const double eps = head.cfg.bn_eps;
  const double rate = head.cfg.dropout;
  const int d = head.cfg.embed_dim;
  const int b = bf.b;
  const int k = bf.k;

  BatchForward fwd;
  fwd.g = project_forward(head.global_net, bf.global_rows, train,
                          train ? &masks->global : nullptr, rate, eps);
  if (uses_local_distance(variant)) {
    fwd.l = project_forward(head.local_net, bf.regions, train,
                            train ? &masks->local : nullptr, rate, eps);
  }
  if (uses_attention(variant)) {
    fwd.a = project_forward(head.attn_net, bf.regions, train,
                            train ? &masks->attn : nullptr, rate, eps);
    fwd.ecat = Mat(b, d);
    fwd.ecat_norm.resize(b);
    for (int t = 0; t < b; ++t) {
      const double* raw = head.categories.row(bf.category_ids[t]);
      double norm2 = 0.0;
      for (int j = 0; j < d; ++j) norm2 += raw[j] * raw[j];
      const double norm = std::sqrt(norm2);
      if (norm < 1e-12) {
        throw DegenerateNormError("category row has near-zero norm");
      }
      fwd.ecat_norm[t] = norm;
      for (int j = 0; j < d; ++j) fwd.ecat(t, j) = raw[j] / norm;
    }
  }

  fwd.d_g_pos.assign(b, 0.0);
  fwd.d_g_neg.assign(b, 0.0);
  fwd.d_l_pos.assign(b, 0.0);
  fwd.d_l_neg.assign(b, 0.0);
  fwd.d_pos.assign(b, 0.0);
  fwd.d_neg.assign(b, 0.0);
  fwd.active.assign(b, false);
  fwd.attn.resize(b);

  double loss_sum = 0.0;
  for (int t = 0; t < b; ++t) {
    const double* f_pp = fwd.g.y.row(bf.pos_offset + t);
    const double* f_pn = fwd.g.y.row(bf.neg_offset + t);

    if (uses_global_distance(variant)) {
      const double* f_s = fwd.g.y.row(bf.scene_offset + t);
      fwd.d_g_pos[t] = squared_distance(f_s, f_pp, d);
      fwd.d_g_neg[t] = squared_distance(f_s, f_pn, d);
    }

    if (uses_local_distance(variant)) {
      if (uses_attention(variant)) {
        Mat region_hats(k, d);
        for (int i = 0; i < k; ++i) {
          const double* src = fwd.a.y.row(t * k + i);
          std::copy(src, src + d, region_hats.row(i));
        }
        Vec e_c(d);
        for (int j = 0; j < d; ++j) e_c[j] = fwd.ecat(t, j);
        fwd.attn[t] = attention_weights(region_hats, e_c);
      } else {
        fwd.attn[t].assign(k, 1.0 / k);
      }
      double pos_acc = 0.0, neg_acc = 0.0;
      for (int i = 0; i < k; ++i) {
        const double* f_i = fwd.l.y.row(t * k + i);
        pos_acc += fwd.attn[t][i] * squared_distance(f_i, f_pp, d);
        neg_acc += fwd.attn[t][i] * squared_distance(f_i, f_pn, d);
      }
      fwd.d_l_pos[t] = pos_acc;
      fwd.d_l_neg[t] = neg_acc;
    }

    switch (variant) {
      case Variant::hybrid:
      case Variant::hybrid_uniform:
        fwd.d_pos[t] = (fwd.d_g_pos[t] + fwd.d_l_pos[t]) / 2.0;
        fwd.d_neg[t] = (fwd.d_g_neg[t] + fwd.d_l_neg[t]) / 2.0;
        break;
      case Variant::global_only:
        fwd.d_pos[t] = fwd.d_g_pos[t];
        fwd.d_neg[t] = fwd.d_g_neg[t];
        break;
      case Variant::local_only:
        fwd.d_pos[t] = fwd.d_l_pos[t];
        fwd.d_neg[t] = fwd.d_l_neg[t];
        break;
    }

    fwd.active[t] = fwd.d_pos[t] - fwd.d_neg[t] + margin > 0.0;
    loss_sum += hinge_loss(fwd.d_pos[t], fwd.d_neg[t], margin);
  }

  fwd.loss = loss_sum / b;
  return fwd;
}

HeadGrads backward_batch(const Head& head, const BatchFeatures& bf,
                         const BatchForward& fwd) {
  const Variant variant = head.cfg.variant;
  const int d = head.cfg.embed_dim;
  const int b = bf.b;
  const int k = bf.k;

  HeadGrads grads;
  grads.global = zero_projection_grads(head.global_net);
  grads.local = zero_projection_grads(head.local_net);
  grads.attn = zero_projection_grads(head.attn_net);
  grads.categories = Mat(head.categories.rows, head.categories.cols);

  double c_g = 0.0, c_l = 0.0;
  switch (variant) {
    case Variant::hybrid:
    case Variant::hybrid_uniform: c_g = 0.5; c_l = 0.5; break;
    case Variant::global_only: c_g = 1.0; break;
    case Variant::local_only: c_l = 1.0; break;
  }

  Mat gy_global(fwd.g.y.rows, d);
  Mat gy_local, gy_attn;
  if (uses_local_distance(variant)) gy_local = Mat(fwd.l.y.rows, d);
  if (uses_attention(variant)) gy_attn = Mat(fwd.a.y.rows, d);

  for (int t = 0; t < b; ++t) {
    if (!fwd.active[t]) continue;
    // d(loss)/d(d_pos) and d(loss)/d(d_neg) for the mean hinge.
    const double g_pos = 1.0 / b;
    const double g_neg = -1.0 / b;

    const double* f_pp = fwd.g.y.row(bf.pos_offset + t);
    const double* f_pn = fwd.g.y.row(bf.neg_offset + t);
    double* g_pp = gy_global.row(bf.pos_offset + t);
    double* g_pn = gy_global.row(bf.neg_offset + t);

    if (uses_global_distance(variant)) {
      const double* f_s = fwd.g.y.row(bf.scene_offset + t);
      double* g_s = gy_global.row(bf.scene_offset + t);
      const double gp = g_pos * c_g;
      const double gn = g_neg * c_g;
      for (int j = 0; j < d; ++j) {
        const double diff_p = f_s[j] - f_pp[j];
        const double diff_n = f_s[j] - f_pn[j];
        g_s[j] += 2.0 * (gp * diff_p + gn * diff_n);
        g_pp[j] -= 2.0 * gp * diff_p;
        g_pn[j] -= 2.0 * gn * diff_n;
      }
    }

    if (uses_local_distance(variant)) {
      const double gp = g_pos * c_l;
      const double gn = g_neg * c_l;
      const Vec& a = fwd.attn[t];
      Vec g_attn(k, 0.0);
      for (int i = 0; i < k; ++i) {
        const double* f_i = fwd.l.y.row(t * k + i);
        double* g_i = gy_local.row(t * k + i);
        double dist2_p = 0.0, dist2_n = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff_p = f_i[j] - f_pp[j];
          const double diff_n = f_i[j] - f_pn[j];
          dist2_p += diff_p * diff_p;
          dist2_n += diff_n * diff_n;
          g_i[j] += 2.0 * a[i] * (gp * diff_p + gn * diff_n);
          g_pp[j] -= 2.0 * gp * a[i] * diff_p;
          g_pn[j] -= 2.0 * gn * a[i] * diff_n;
        }
        g_attn[i] = gp * dist2_p + gn * dist2_n;
      }

      if (uses_attention(variant)) {
        // Softmax backward, then through the negated squared distance to the
        // region-hat embeddings and the normalized category embedding.
        double dot = 0.0;
        for (int i = 0; i < k; ++i) dot += g_attn[i] * a[i];
        Vec g_ec(d, 0.0);
        for (int i = 0; i < k; ++i) {
          const double g_logit = a[i] * (g_attn[i] - dot);
          const double* f_hat = fwd.a.y.row(t * k + i);
          double* g_hat = gy_attn.row(t * k + i);
          for (int j = 0; j < d; ++j) {
            const double diff = f_hat[j] - fwd.ecat(t, j);
            g_hat[j] += -2.0 * g_logit * diff;
            g_ec[j] += 2.0 * g_logit * diff;
          }
        }
        // Through the category normalization into the raw table row.
        double ec_dot = 0.0;
        for (int j = 0; j < d; ++j) ec_dot += g_ec[j] * fwd.ecat(t, j);
        double* g_raw = grads.categories.row(bf.category_ids[t]);
        for (int j = 0; j < d; ++j) {
          g_raw[j] += (g_ec[j] - ec_dot * fwd.ecat(t, j)) / fwd.ecat_norm[t];
        }
      }
    }
  }

  project_backward(head.global_net, fwd.g, gy_global, head.cfg.bn_eps,
                   grads.global);
  if (uses_local_distance(variant)) {
    project_backward(head.local_net, fwd.l, gy_local, head.cfg.bn_eps,
                     grads.local);
  }
  if (uses_attention(variant)) {
    project_backward(head.attn_net, fwd.a, gy_attn, head.cfg.bn_eps,
                     grads.attn);
  }
  return grads;
}

std::vector<std::pair<const double*, std::size_t>> grad_tensors(
    const Head& head, const HeadGrads& grads) {
  std::vector<std::pair<const double*, std::size_t>> out;
  auto add_net = [&out](const ProjectionGrads& g) {
    out.emplace_back(g.w1.a.data(), g.w1.a.size());
    out.emplace_back(g.b1.data(), g.b1.size());
    out.emplace_back(g.gamma.data(), g.gamma.size());
    out.emplace_back(g.beta.data(), g.beta.size());
    out.emplace_back(g.w2.a.data(), g.w2.a.size());
    out.emplace_back(g.b2.data(), g.b2.size());
  };
  add_net(grads.global);
  add_net(grads.local);
  add_net(grads.attn);
  out.emplace_back(grads.categories.a.data(), grads.categories.a.size());
  (void)head;
  return out;
}

void adam_step(Head& head, const HeadGrads& grads, AdamState& state,
               const TrainConfig& cfg) {
  auto params = trainable_tensors(head);
  const auto gs = grad_tensors(head, grads);
  if (params.size() != gs.size() || params.size() != state.m.size()) {
    throw ShapeError("optimizer state does not match the parameter set");
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != gs[i].second) {
      throw ShapeError("gradient shape mismatch for " + params[i].name);
    }
    double* p = params[i].data;
    const double* g = gs[i].first;
    Vec& m = state.m[i];
    Vec& v = state.v[i];
    for (std::size_t j = 0; j < params[i].size; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

TrainInputs make_train_inputs(const DataView& view,
                              const FeatureTable& features) {
  TrainInputs in;
  in.train_pairs = view.train;
  in.val_pairs = view.val;
  in.train_catalog = view.train_catalog;
  in.val_catalog = view.val_catalog;
  in.features = &features;
  in.n_categories = view.n_categories;
  return in;
}

namespace {

Checkpoint snapshot(const TrainConfig& cfg, const Head& head,
                    const AdamState& adam, const Rng& sampler,
                    const Rng& dropout, std::int64_t epoch,
                    double val_accuracy) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.head_cfg = head.cfg;
  ckpt.epoch = epoch;
  ckpt.val_accuracy = val_accuracy;
  ckpt.head = head;
  ckpt.adam = adam;
  ckpt.sampler_rng = sampler.save_state();
  ckpt.dropout_rng = dropout.save_state();
  return ckpt;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainInputs& data,
                  const std::optional<Checkpoint>& resume) {
  if (data.features == nullptr) throw UsageError("training requires features");
  if (data.train_pairs.empty()) throw UsageError("empty training split");
  if (data.val_pairs.empty()) throw UsageError("empty validation split");
  if (cfg.batch_size < 2) throw UsageError("batch_size must be at least 2");
  if (cfg.margin <= 0.0) throw UsageError("margin must be positive");

  HeadConfig head_cfg;
  head_cfg.spec = data.features->spec;
  head_cfg.embed_dim = cfg.embed_dim;
  head_cfg.n_categories = data.n_categories;
  head_cfg.variant = cfg.variant;
  head_cfg.dropout = cfg.dropout;

  Head head;
  AdamState adam;
  Rng sampler(derive_seed(cfg.seed, 2));
  Rng dropout_rng(derive_seed(cfg.seed, 3));
  std::int64_t start_epoch = 0;
  double best_acc = -1.0;
  std::optional<Checkpoint> best;

  if (resume.has_value()) {
    head = resume->head;
    adam = resume->adam;
    sampler.load_state(resume->sampler_rng);
    dropout_rng.load_state(resume->dropout_rng);
    start_epoch = resume->epoch;
    best_acc = resume->val_accuracy;
    best = *resume;
  } else {
    Rng init_rng(derive_seed(cfg.seed, 1));
    head = init_head(head_cfg, init_rng);
    adam = init_adam(head);
  }

  const auto val_questions =
      make_questions(data.val_pairs, data.val_catalog, cfg.eval_seed);

  const int steps_per_epoch =
      static_cast<int>((data.train_pairs.size() + cfg.batch_size - 1) /
                       cfg.batch_size);

  TrainHistory history;
  double last_val_acc = resume.has_value() ? resume->val_accuracy : -1.0;

  for (std::int64_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const auto triplets =
          sample_batch(data.train_pairs, data.train_catalog, sampler,
                       cfg.batch_size);
      const auto bf = gather_batch(triplets, *data.features, cfg.variant);
      const auto masks = draw_batch_masks(bf, cfg.variant,
                                          head_cfg.hidden_dim(), cfg.dropout,
                                          dropout_rng);
      const auto fwd = forward_batch(head, bf, &masks, true, cfg.margin);
      if (!std::isfinite(fwd.loss)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << " step " << step
           << " (d_pos[0]=" << fwd.d_pos[0] << ", d_neg[0]=" << fwd.d_neg[0]
           << ")";
        throw NonFiniteLossError(os.str());
      }
      const auto grads = backward_batch(head, bf, fwd);

      update_running_stats(head.global_net, fwd.g.mu, fwd.g.var,
                           head_cfg.bn_momentum);
      if (uses_local_distance(cfg.variant)) {
        update_running_stats(head.local_net, fwd.l.mu, fwd.l.var,
                             head_cfg.bn_momentum);
      }
      if (uses_attention(cfg.variant)) {
        update_running_stats(head.attn_net, fwd.a.mu, fwd.a.var,
                             head_cfg.bn_momentum);
      }
      adam_step(head, grads, adam, cfg);
      loss_sum += fwd.loss;
    }
    history.epochs.push_back(
        EpochStat{static_cast<int>(epoch), loss_sum / steps_per_epoch});

    if (epoch % cfg.validate_every == 0 || epoch == cfg.epochs) {
      ModelScorer scorer(head, *data.features);
      const double acc = binary_accuracy(scorer, val_questions);
      history.validations.push_back(ValStat{static_cast<int>(epoch), acc});
      last_val_acc = acc;
      if (acc > best_acc) {
        best_acc = acc;
        best = snapshot(cfg, head, adam, sampler, dropout_rng, epoch, acc);
      }
    }
  }

  TrainResult result;
  result.final_state = snapshot(cfg, head, adam, sampler, dropout_rng,
                                cfg.epochs, last_val_acc);
  result.best = best.has_value() ? *best : result.final_state;
  result.history = history;
  return result;
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,mean_loss,val_accuracy\n";
  std::map<int, double> val;
  for (const auto& v : history.validations) val[v.epoch] = v.accuracy;
  for (const auto& e : history.epochs) {
    out << e.epoch << "," << e.mean_loss << ",";
    if (auto it = val.find(e.epoch); it != val.end()) out << it->second;
    out << "\n";
  }
}

}  // namespace ctl
