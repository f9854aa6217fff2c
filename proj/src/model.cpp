#include "ctl/model.hpp"

#include <algorithm>
#include <cmath>

#include "ctl/errors.hpp"

namespace ctl {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::hybrid: return "G+L";
    case Variant::global_only: return "G";
    case Variant::local_only: return "L";
    case Variant::hybrid_uniform: return "G+L0";
  }
  return "G+L";
}

Variant variant_from_string(const std::string& s) {
  if (s == "G+L") return Variant::hybrid;
  if (s == "G") return Variant::global_only;
  if (s == "L") return Variant::local_only;
  if (s == "G+L0") return Variant::hybrid_uniform;
  throw UsageError("unknown variant '" + s + "' (expected G+L|G|L|G+L0)");
}

namespace {

ProjectionParams init_projection(int in, int hidden, int out, Rng& rng) {
  ProjectionParams p;
  p.w1 = Mat(in, hidden);
  const double s1 = std::sqrt(2.0 / in);
  for (auto& w : p.w1.a) w = rng.normal() * s1;
  p.b1.assign(hidden, 0.0);
  p.gamma.assign(hidden, 1.0);
  p.beta.assign(hidden, 0.0);
  p.running_mean.assign(hidden, 0.0);
  p.running_var.assign(hidden, 1.0);
  p.w2 = Mat(hidden, out);
  const double s2 = std::sqrt(2.0 / hidden);
  for (auto& w : p.w2.a) w = rng.normal() * s2;
  p.b2.assign(out, 0.0);
  return p;
}

void normalize_row_inplace(double* row, int d) {
  double norm2 = 0.0;
  for (int j = 0; j < d; ++j) norm2 += row[j] * row[j];
  const double norm = std::sqrt(norm2);
  if (norm < 1e-12) {
    throw DegenerateNormError("cannot normalize a near-zero vector");
  }
  for (int j = 0; j < d; ++j) row[j] /= norm;
}

}  // namespace

Head init_head(const HeadConfig& cfg, Rng& rng) {
  if (!cfg.spec.valid() || cfg.embed_dim < 1 || cfg.n_categories < 1) {
    throw ShapeError("invalid head configuration");
  }
  Head h;
  h.cfg = cfg;
  const int hidden = cfg.hidden_dim();
  h.global_net = init_projection(cfg.spec.d1, hidden, cfg.embed_dim, rng);
  h.local_net = init_projection(cfg.spec.d2, hidden, cfg.embed_dim, rng);
  h.attn_net = init_projection(cfg.spec.d2, hidden, cfg.embed_dim, rng);
  h.categories = Mat(cfg.n_categories, cfg.embed_dim);
  for (auto& w : h.categories.a) w = rng.normal();
  return h;
}

ProjCache project_forward(const ProjectionParams& p, const Mat& x, bool train,
                          const Mat* dropout_mask, double dropout_rate,
                          double bn_eps) {
  if (x.cols != p.in_dim()) {
    throw ShapeError("projection input dim mismatch");
  }
  const int n = x.rows;
  const int hidden = p.hidden_dim();
  const int out = p.out_dim();

  ProjCache c;
  c.train_mode = train;
  c.x = x;

  Mat z1(n, hidden);
  matmul(x, p.w1, z1);
  for (int r = 0; r < n; ++r) {
    double* row = z1.row(r);
    for (int j = 0; j < hidden; ++j) row[j] += p.b1[j];
  }

  if (train) {
    c.mu.assign(hidden, 0.0);
    c.var.assign(hidden, 0.0);
    for (int r = 0; r < n; ++r) {
      const double* row = z1.row(r);
      for (int j = 0; j < hidden; ++j) c.mu[j] += row[j];
    }
    for (int j = 0; j < hidden; ++j) c.mu[j] /= n;
    for (int r = 0; r < n; ++r) {
      const double* row = z1.row(r);
      for (int j = 0; j < hidden; ++j) {
        const double d = row[j] - c.mu[j];
        c.var[j] += d * d;
      }
    }
    for (int j = 0; j < hidden; ++j) c.var[j] /= n;
  } else {
    c.mu = p.running_mean;
    c.var = p.running_var;
  }

  c.xhat = Mat(n, hidden);
  c.relu_out = Mat(n, hidden);
  Vec inv_std(hidden);
  for (int j = 0; j < hidden; ++j) inv_std[j] = 1.0 / std::sqrt(c.var[j] + bn_eps);
  for (int r = 0; r < n; ++r) {
    const double* zr = z1.row(r);
    double* xh = c.xhat.row(r);
    double* ro = c.relu_out.row(r);
    for (int j = 0; j < hidden; ++j) {
      xh[j] = (zr[j] - c.mu[j]) * inv_std[j];
      const double u = p.gamma[j] * xh[j] + p.beta[j];
      ro[j] = u > 0.0 ? u : 0.0;
    }
  }

  if (train) {
    if (dropout_mask == nullptr || dropout_mask->rows != n ||
        dropout_mask->cols != hidden) {
      throw ShapeError("train-mode projection requires an N x hidden mask");
    }
    c.mask = *dropout_mask;
    c.keep = 1.0 - dropout_rate;
    c.dropped = Mat(n, hidden);
    for (int r = 0; r < n; ++r) {
      const double* ro = c.relu_out.row(r);
      const double* m = c.mask.row(r);
      double* dr = c.dropped.row(r);
      for (int j = 0; j < hidden; ++j) dr[j] = ro[j] * m[j] / c.keep;
    }
  } else {
    c.dropped = c.relu_out;
  }

  c.y = Mat(n, out);
  matmul(c.dropped, p.w2, c.y);
  c.z2_norm.resize(n);
  for (int r = 0; r < n; ++r) {
    double* row = c.y.row(r);
    for (int j = 0; j < out; ++j) row[j] += p.b2[j];
    double norm2 = 0.0;
    for (int j = 0; j < out; ++j) norm2 += row[j] * row[j];
    const double norm = std::sqrt(norm2);
    if (norm < 1e-12) {
      throw DegenerateNormError("pre-normalization embedding has near-zero norm");
    }
    c.z2_norm[r] = norm;
    for (int j = 0; j < out; ++j) row[j] /= norm;
  }
  return c;
}

ProjectionGrads zero_projection_grads(const ProjectionParams& p) {
  ProjectionGrads g;
  g.w1 = Mat(p.w1.rows, p.w1.cols);
  g.b1.assign(p.b1.size(), 0.0);
  g.gamma.assign(p.gamma.size(), 0.0);
  g.beta.assign(p.beta.size(), 0.0);
  g.w2 = Mat(p.w2.rows, p.w2.cols);
  g.b2.assign(p.b2.size(), 0.0);
  return g;
}

void project_backward(const ProjectionParams& p, const ProjCache& c,
                      const Mat& g_y, double bn_eps, ProjectionGrads& out) {
  const int n = c.y.rows;
  const int hidden = p.hidden_dim();
  const int dim = p.out_dim();

  // Through the row L2 normalization: g_z = (g_y - (g_y . y) y) / ||z||.
  Mat g_z2(n, dim);
  for (int r = 0; r < n; ++r) {
    const double* gy = g_y.row(r);
    const double* y = c.y.row(r);
    double dot = 0.0;
    for (int j = 0; j < dim; ++j) dot += gy[j] * y[j];
    double* gz = g_z2.row(r);
    for (int j = 0; j < dim; ++j) gz[j] = (gy[j] - dot * y[j]) / c.z2_norm[r];
  }

  // Second linear layer.
  for (int r = 0; r < n; ++r) {
    const double* d = c.dropped.row(r);
    const double* gz = g_z2.row(r);
    for (int j = 0; j < dim; ++j) out.b2[j] += gz[j];
    for (int k = 0; k < hidden; ++k) {
      const double dv = d[k];
      if (dv == 0.0) continue;
      double* wrow = out.w2.row(k);
      for (int j = 0; j < dim; ++j) wrow[j] += dv * gz[j];
    }
  }
  Mat g_drop(n, hidden);
  for (int r = 0; r < n; ++r) {
    const double* gz = g_z2.row(r);
    double* gd = g_drop.row(r);
    for (int k = 0; k < hidden; ++k) {
      double acc = 0.0;
      const double* wrow = p.w2.row(k);
      for (int j = 0; j < dim; ++j) acc += wrow[j] * gz[j];
      gd[k] = acc;
    }
  }

  // Dropout and ReLU.
  Mat g_u(n, hidden);
  for (int r = 0; r < n; ++r) {
    const double* gd = g_drop.row(r);
    const double* ro = c.relu_out.row(r);
    double* gu = g_u.row(r);
    if (c.train_mode) {
      const double* m = c.mask.row(r);
      for (int j = 0; j < hidden; ++j) {
        gu[j] = gd[j] * m[j] / c.keep * (ro[j] > 0.0 ? 1.0 : 0.0);
      }
    } else {
      for (int j = 0; j < hidden; ++j) {
        gu[j] = gd[j] * (ro[j] > 0.0 ? 1.0 : 0.0);
      }
    }
  }

  // Batch norm.
  Mat g_z1(n, hidden);
  if (c.train_mode) {
    Vec sum_gx(hidden, 0.0), sum_gx_xhat(hidden, 0.0);
    for (int r = 0; r < n; ++r) {
      const double* gu = g_u.row(r);
      const double* xh = c.xhat.row(r);
      for (int j = 0; j < hidden; ++j) {
        out.gamma[j] += gu[j] * xh[j];
        out.beta[j] += gu[j];
        const double gx = gu[j] * p.gamma[j];
        sum_gx[j] += gx;
        sum_gx_xhat[j] += gx * xh[j];
      }
    }
    for (int r = 0; r < n; ++r) {
      const double* gu = g_u.row(r);
      const double* xh = c.xhat.row(r);
      double* gz = g_z1.row(r);
      for (int j = 0; j < hidden; ++j) {
        const double inv_std = 1.0 / std::sqrt(c.var[j] + bn_eps);
        const double gx = gu[j] * p.gamma[j];
        gz[j] = inv_std * (gx - sum_gx[j] / n - xh[j] * sum_gx_xhat[j] / n);
      }
    }
  } else {
    for (int r = 0; r < n; ++r) {
      const double* gu = g_u.row(r);
      const double* xh = c.xhat.row(r);
      double* gz = g_z1.row(r);
      for (int j = 0; j < hidden; ++j) {
        out.gamma[j] += gu[j] * xh[j];
        out.beta[j] += gu[j];
        gz[j] = gu[j] * p.gamma[j] / std::sqrt(c.var[j] + bn_eps);
      }
    }
  }

  // First linear layer.
  for (int r = 0; r < n; ++r) {
    const double* x = c.x.row(r);
    const double* gz = g_z1.row(r);
    for (int j = 0; j < hidden; ++j) out.b1[j] += gz[j];
    for (int k = 0; k < p.w1.rows; ++k) {
      const double xv = x[k];
      if (xv == 0.0) continue;
      double* wrow = out.w1.row(k);
      for (int j = 0; j < hidden; ++j) wrow[j] += xv * gz[j];
    }
  }
}

Mat draw_dropout_mask(int rows, int cols, double dropout_rate, Rng& rng) {
  Mat m(rows, cols);
  for (auto& v : m.a) v = rng.bernoulli(dropout_rate) ? 0.0 : 1.0;
  return m;
}

void update_running_stats(ProjectionParams& p, const Vec& mu, const Vec& var,
                          double momentum) {
  for (std::size_t j = 0; j < p.running_mean.size(); ++j) {
    p.running_mean[j] = momentum * p.running_mean[j] + (1.0 - momentum) * mu[j];
    p.running_var[j] = momentum * p.running_var[j] + (1.0 - momentum) * var[j];
  }
}

Vec project(ProjectionParams& p, const Vec& x, bool train, Rng* rng,
            double dropout_rate, double bn_eps, double bn_momentum) {
  Mat xm(1, static_cast<int>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) xm(0, static_cast<int>(i)) = x[i];
  Mat mask;
  if (train) {
    if (rng == nullptr) throw ShapeError("train-mode project requires an rng");
    mask = draw_dropout_mask(1, p.hidden_dim(), dropout_rate, *rng);
  }
  ProjCache c = project_forward(p, xm, train, train ? &mask : nullptr,
                                dropout_rate, bn_eps);
  if (train) update_running_stats(p, c.mu, c.var, bn_momentum);
  Vec out(p.out_dim());
  for (int j = 0; j < p.out_dim(); ++j) out[j] = c.y(0, j);
  return out;
}

Vec project_eval(const ProjectionParams& p, const Vec& x, double bn_eps) {
  Mat xm(1, static_cast<int>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) xm(0, static_cast<int>(i)) = x[i];
  ProjCache c = project_forward(p, xm, false, nullptr, 0.0, bn_eps);
  Vec out(p.out_dim());
  for (int j = 0; j < p.out_dim(); ++j) out[j] = c.y(0, j);
  return out;
}

Vec normalized_category(const Mat& table, int category_id) {
  if (category_id < 0 || category_id >= table.rows) {
    throw ShapeError("category id out of range");
  }
  Vec e(table.cols);
  const double* row = table.row(category_id);
  std::copy(row, row + table.cols, e.begin());
  normalize_row_inplace(e.data(), table.cols);
  return e;
}

Vec attention_weights(const Mat& region_hat_embeds, const Vec& cat_embed) {
  const int k = region_hat_embeds.rows;
  const int d = region_hat_embeds.cols;
  Vec logits(k);
  for (int i = 0; i < k; ++i) {
    const double* f = region_hat_embeds.row(i);
    double dist2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = f[j] - cat_embed[j];
      dist2 += diff * diff;
    }
    logits[i] = -dist2;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  Vec w(k);
  for (int i = 0; i < k; ++i) {
    w[i] = std::exp(logits[i] - mx);
    sum += w[i];
  }
  for (int i = 0; i < k; ++i) w[i] /= sum;
  return w;
}

double d_global(const Vec& f_s, const Vec& f_p) {
  double acc = 0.0;
  for (std::size_t j = 0; j < f_s.size(); ++j) {
    const double d = f_s[j] - f_p[j];
    acc += d * d;
  }
  return acc;
}

double d_local(const Mat& region_embeds, const Vec& f_p, const Vec& attn) {
  double acc = 0.0;
  for (int i = 0; i < region_embeds.rows; ++i) {
    const double* f = region_embeds.row(i);
    double dist2 = 0.0;
    for (std::size_t j = 0; j < f_p.size(); ++j) {
      const double d = f[j] - f_p[j];
      dist2 += d * d;
    }
    acc += attn[i] * dist2;
  }
  return acc;
}

Vec to_vec(const float* data, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = static_cast<double>(data[i]);
  return v;
}

namespace {

Mat regions_as_rows(const FeatureMap& map) {
  Mat x(map.cells(), map.d2);
  for (int i = 0; i < map.cells(); ++i) {
    const float* cell = map.cell(i);
    double* row = x.row(i);
    for (int j = 0; j < map.d2; ++j) row[j] = static_cast<double>(cell[j]);
  }
  return x;
}

CompatibilityScore score_from_embeds(const Head& head, const Vec& f_s,
                                     const Vec& f_p, const Mat& region_embeds,
                                     const Mat& region_hat_embeds,
                                     int category_id) {
  CompatibilityScore s;
  const int k = region_embeds.rows;
  if (head.cfg.variant == Variant::hybrid_uniform) {
    s.attention.assign(k, 1.0 / k);
  } else {
    const Vec e_c = normalized_category(head.categories, category_id);
    s.attention = attention_weights(region_hat_embeds, e_c);
  }
  s.global = d_global(f_s, f_p);
  s.local = d_local(region_embeds, f_p, s.attention);
  s.hybrid = (s.global + s.local) / 2.0;
  return s;
}

}  // namespace

CompatibilityScore score_pair(const Head& head, const SceneFeatures& scene,
                              const GlobalFeature& product, int category_id) {
  const auto& cfg = head.cfg;
  if (static_cast<int>(scene.global.v.size()) != cfg.spec.d1 ||
      static_cast<int>(product.v.size()) != cfg.spec.d1 ||
      scene.map.cells() != cfg.spec.cells() || scene.map.d2 != cfg.spec.d2) {
    throw ShapeError("features do not match the head's spec");
  }
  const Vec f_s = project_eval(
      head.global_net, to_vec(scene.global.v.data(), cfg.spec.d1), cfg.bn_eps);
  const Vec f_p = project_eval(head.global_net,
                               to_vec(product.v.data(), cfg.spec.d1), cfg.bn_eps);
  const Mat regions = regions_as_rows(scene.map);
  const ProjCache local_c =
      project_forward(head.local_net, regions, false, nullptr, 0.0, cfg.bn_eps);
  const ProjCache attn_c =
      project_forward(head.attn_net, regions, false, nullptr, 0.0, cfg.bn_eps);
  return score_from_embeds(head, f_s, f_p, local_c.y, attn_c.y, category_id);
}

CompatibilityScore score_pair_train(Head& head, const SceneFeatures& scene,
                                    const GlobalFeature& product,
                                    int category_id, Rng& rng) {
  const auto& cfg = head.cfg;
  const Vec f_s =
      project(head.global_net, to_vec(scene.global.v.data(), cfg.spec.d1), true,
              &rng, cfg.dropout, cfg.bn_eps, cfg.bn_momentum);
  const Vec f_p =
      project(head.global_net, to_vec(product.v.data(), cfg.spec.d1), true,
              &rng, cfg.dropout, cfg.bn_eps, cfg.bn_momentum);

  const Mat regions = regions_as_rows(scene.map);
  Mat mask_l = draw_dropout_mask(regions.rows, cfg.hidden_dim(), cfg.dropout, rng);
  ProjCache local_c = project_forward(head.local_net, regions, true, &mask_l,
                                      cfg.dropout, cfg.bn_eps);
  update_running_stats(head.local_net, local_c.mu, local_c.var, cfg.bn_momentum);
  Mat mask_a = draw_dropout_mask(regions.rows, cfg.hidden_dim(), cfg.dropout, rng);
  ProjCache attn_c = project_forward(head.attn_net, regions, true, &mask_a,
                                     cfg.dropout, cfg.bn_eps);
  update_running_stats(head.attn_net, attn_c.mu, attn_c.var, cfg.bn_momentum);
  return score_from_embeds(head, f_s, f_p, local_c.y, attn_c.y, category_id);
}

double variant_score(const CompatibilityScore& s, Variant v) {
  switch (v) {
    case Variant::global_only: return s.global;
    case Variant::local_only: return s.local;
    case Variant::hybrid:
    case Variant::hybrid_uniform: return s.hybrid;
  }
  return s.hybrid;
}

std::vector<NamedTensor> trainable_tensors(Head& head) {
  std::vector<NamedTensor> out;
  auto add = [&out](const std::string& name, Mat& m) {
    out.push_back(NamedTensor{name, m.a.data(), {m.rows, m.cols}, m.a.size()});
  };
  auto addv = [&out](const std::string& name, Vec& v) {
    out.push_back(
        NamedTensor{name, v.data(), {static_cast<int>(v.size())}, v.size()});
  };
  auto add_net = [&](const std::string& prefix, ProjectionParams& p) {
    add(prefix + ".w1", p.w1);
    addv(prefix + ".b1", p.b1);
    addv(prefix + ".bn_gamma", p.gamma);
    addv(prefix + ".bn_beta", p.beta);
    add(prefix + ".w2", p.w2);
    addv(prefix + ".b2", p.b2);
  };
  add_net("global", head.global_net);
  add_net("local", head.local_net);
  add_net("attn", head.attn_net);
  add("categories", head.categories);
  return out;
}

std::vector<NamedTensor> state_tensors(Head& head) {
  std::vector<NamedTensor> out = trainable_tensors(head);
  auto addv = [&out](const std::string& name, Vec& v) {
    out.push_back(
        NamedTensor{name, v.data(), {static_cast<int>(v.size())}, v.size()});
  };
  addv("global.bn_running_mean", head.global_net.running_mean);
  addv("global.bn_running_var", head.global_net.running_var);
  addv("local.bn_running_mean", head.local_net.running_mean);
  addv("local.bn_running_var", head.local_net.running_var);
  addv("attn.bn_running_mean", head.attn_net.running_mean);
  addv("attn.bn_running_var", head.attn_net.running_var);
  return out;
}

}  // namespace ctl
