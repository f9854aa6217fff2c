#include <doctest.h>

#include <cmath>

#include "ctl/experiments.hpp"
#include "ctl/training.hpp"
#include "test_support.hpp"

using namespace ctl;
using ctl::testing::TinyData;
using ctl::testing::make_tiny_data;

namespace {

const FeatureSpec kTinySpec{6, 2, 2, 5};

std::vector<Triplet> fixed_triplets(const TinyData& data, Rng& rng, int n) {
  return sample_batch(data.pairs, data.catalog, rng, n);
}

struct FdOutcome {
  double max_rel_err = 0.0;
  int checked = 0;
  bool any_active = false;
};

// Central finite differences against the analytic backward pass, over
// uniformly sampled parameter coordinates. Dropout masks and the batch are
// held fixed; batch statistics recompute from the perturbed parameters.
FdOutcome fd_check(Head& head, const BatchFeatures& bf, const BatchMasks& masks,
                   double margin, int n_coords, Rng& rng) {
  const BatchForward fwd = forward_batch(head, bf, &masks, true, margin);
  const HeadGrads grads = backward_batch(head, bf, fwd);
  auto params = trainable_tensors(head);
  const auto gs = grad_tensors(head, grads);

  FdOutcome out;
  for (bool a : fwd.active) out.any_active |= a;

  const double eps = 1e-4;
  for (int c = 0; c < n_coords; ++c) {
    const std::size_t ti = rng.below(params.size());
    const std::size_t j = rng.below(params[ti].size);
    double* p = params[ti].data + j;
    const double orig = *p;
    *p = orig + eps;
    const double lp = forward_batch(head, bf, &masks, true, margin).loss;
    *p = orig - eps;
    const double lm = forward_batch(head, bf, &masks, true, margin).loss;
    *p = orig;
    const double fd = (lp - lm) / (2.0 * eps);
    const double an = gs[ti].first[j];
    const double denom = std::max(std::abs(fd), std::abs(an));
    double rel = 0.0;
    if (denom >= 1e-8) {
      rel = std::abs(fd - an) / denom;
    } else if (std::abs(fd - an) >= 1e-8) {
      rel = 1.0;
    }
    out.max_rel_err = std::max(out.max_rel_err, rel);
    ++out.checked;
  }
  return out;
}

}  // namespace

TEST_CASE("sample_batch semantics") {
  Rng data_rng(1);
  TinyData data = make_tiny_data(data_rng, 6, 2, 2, kTinySpec);

  // Two products per category: the negative is forced.
  Rng rng(2);
  for (const Triplet& t : sample_batch(data.pairs, data.catalog, rng, 64)) {
    CHECK(t.neg_product != t.pair.product_id);
    const auto& products = data.catalog[t.pair.category_id];
    CHECK((t.neg_product == products[0] || t.neg_product == products[1]));
  }

  // Identical rng state, identical batch.
  Rng rng_a(3);
  Rng rng_b(3);
  const auto batch_a = sample_batch(data.pairs, data.catalog, rng_a, 16);
  const auto batch_b = sample_batch(data.pairs, data.catalog, rng_b, 16);
  for (std::size_t i = 0; i < batch_a.size(); ++i) {
    CHECK(batch_a[i].pair.scene_id == batch_b[i].pair.scene_id);
    CHECK(batch_a[i].neg_product == batch_b[i].neg_product);
  }

  // Singleton categories are an error.
  TinyData bad = data;
  bad.catalog[data.pairs[0].category_id] = {data.pairs[0].product_id};
  Rng rng_c(4);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 64; ++i) {
          sample_batch(bad.pairs, bad.catalog, rng_c, 8);
        }
      }(),
      SingletonCategoryError);
}

TEST_CASE("pair sampling is uniform (Monte Carlo)") {
  Rng data_rng(5);
  TinyData data = make_tiny_data(data_rng, 3, 1, 4, kTinySpec);
  REQUIRE(data.pairs.size() == 3);
  Rng rng(6);
  std::map<std::string, int> counts;
  for (const auto& t : sample_batch(data.pairs, data.catalog, rng, 10000)) {
    ++counts[t.pair.scene_id];
  }
  for (const auto& [scene, count] : counts) {
    CHECK(count > 3333 - 200);
    CHECK(count < 3333 + 200);
  }
}

TEST_CASE("hinge loss values") {
  CHECK(hinge_loss(1.0, 1.0, 0.2) == doctest::Approx(0.2));
  CHECK(hinge_loss(0.0, 4.0, 0.2) == 0.0);
  CHECK(hinge_loss(1.0, 0.5, 0.2) == doctest::Approx(0.7));
}

TEST_CASE("analytic gradients match finite differences for every variant") {
  for (Variant variant : {Variant::hybrid, Variant::global_only,
                          Variant::local_only, Variant::hybrid_uniform}) {
    CAPTURE(to_string(variant));
    Rng data_rng(7);
    TinyData data = make_tiny_data(data_rng, 10, 3, 4, kTinySpec);

    HeadConfig cfg;
    cfg.spec = kTinySpec;
    cfg.embed_dim = 8;
    cfg.n_categories = data.n_categories;
    cfg.variant = variant;
    Rng init(8);
    Head head = init_head(cfg, init);

    Rng sampler(9);
    const auto triplets = fixed_triplets(data, sampler, 4);
    const auto bf = gather_batch(triplets, data.features, variant);
    Rng mask_rng(10);
    const auto masks =
        draw_batch_masks(bf, variant, cfg.hidden_dim(), 0.5, mask_rng);

    Rng coord_rng(11);
    // A margin large enough that several triplets are active.
    const FdOutcome fd = fd_check(head, bf, masks, 0.6, 80, coord_rng);
    CHECK(fd.any_active);
    CHECK(fd.checked == 80);
    CHECK(fd.max_rel_err < 1e-4);
  }
}

TEST_CASE("inactive hinge means exactly zero gradients") {
  Rng data_rng(12);
  TinyData data = make_tiny_data(data_rng, 8, 2, 3, kTinySpec);
  HeadConfig cfg;
  cfg.spec = kTinySpec;
  cfg.embed_dim = 8;
  cfg.n_categories = data.n_categories;
  cfg.dropout = 0.0;  // identical inputs must embed identically
  Rng init(13);
  Head head = init_head(cfg, init);

  Rng sampler(14);
  auto triplets = fixed_triplets(data, sampler, 4);
  // Zero margin and negative == positive: the hinge sits exactly at zero.
  for (auto& t : triplets) t.neg_product = t.pair.product_id;
  const auto bf = gather_batch(triplets, data.features, cfg.variant);
  Rng mask_rng(15);
  const auto masks =
      draw_batch_masks(bf, cfg.variant, cfg.hidden_dim(), 0.0, mask_rng);
  const auto fwd = forward_batch(head, bf, &masks, true, 0.0);
  CHECK(fwd.loss == 0.0);
  const auto grads = backward_batch(head, bf, fwd);
  for (const auto& [ptr, size] : grad_tensors(head, grads)) {
    for (std::size_t i = 0; i < size; ++i) {
      CHECK(ptr[i] == 0.0);
    }
  }
}

TEST_CASE("duplicating every triplet preserves the mean loss and gradients") {
  Rng data_rng(16);
  TinyData data = make_tiny_data(data_rng, 10, 2, 4, kTinySpec);
  HeadConfig cfg;
  cfg.spec = kTinySpec;
  cfg.embed_dim = 8;
  cfg.n_categories = data.n_categories;
  Rng init(17);
  Head head = init_head(cfg, init);

  Rng sampler(18);
  const auto triplets = fixed_triplets(data, sampler, 3);
  std::vector<Triplet> doubled = triplets;
  doubled.insert(doubled.end(), triplets.begin(), triplets.end());

  const auto bf1 = gather_batch(triplets, data.features, cfg.variant);
  const auto bf2 = gather_batch(doubled, data.features, cfg.variant);
  // Shared masks: replicate the single-batch masks row-block-wise so both
  // batches drop the same units for corresponding rows.
  Rng mask_rng(19);
  const auto masks1 =
      draw_batch_masks(bf1, cfg.variant, cfg.hidden_dim(), 0.5, mask_rng);
  BatchMasks masks2;
  auto duplicate_blocks = [](const Mat& m, int blocks) {
    // m stores `blocks` equally sized row blocks; duplicate each block.
    Mat out(2 * m.rows, m.cols);
    const int rows_per_block = m.rows / blocks;
    for (int blk = 0; blk < blocks; ++blk) {
      for (int r = 0; r < rows_per_block; ++r) {
        for (int rep = 0; rep < 2; ++rep) {
          const int dst = blk * 2 * rows_per_block + rep * rows_per_block + r;
          for (int c = 0; c < m.cols; ++c) {
            out(dst, c) = m(blk * rows_per_block + r, c);
          }
        }
      }
    }
    return out;
  };
  masks2.global = duplicate_blocks(masks1.global, 3);  // scenes, pos, neg
  masks2.local = duplicate_blocks(masks1.local, 1);    // region rows
  masks2.attn = duplicate_blocks(masks1.attn, 1);

  const auto fwd1 = forward_batch(head, bf1, &masks1, true, 0.4);
  const auto fwd2 = forward_batch(head, bf2, &masks2, true, 0.4);
  CHECK(fwd2.loss == doctest::Approx(fwd1.loss).epsilon(1e-12));

  const auto g1 = backward_batch(head, bf1, fwd1);
  const auto g2 = backward_batch(head, bf2, fwd2);
  const auto t1 = grad_tensors(head, g1);
  const auto t2 = grad_tensors(head, g2);
  for (std::size_t i = 0; i < t1.size(); ++i) {
    for (std::size_t j = 0; j < t1[i].second; ++j) {
      CHECK(t2[i].first[j] == doctest::Approx(t1[i].first[j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("adam takes a signed step of roughly lr on fresh state") {
  Rng data_rng(20);
  TinyData data = make_tiny_data(data_rng, 6, 2, 3, kTinySpec);
  HeadConfig cfg;
  cfg.spec = kTinySpec;
  cfg.embed_dim = 8;
  cfg.n_categories = data.n_categories;
  Rng init(21);
  Head head = init_head(cfg, init);
  AdamState adam = init_adam(head);

  HeadGrads grads;
  grads.global = zero_projection_grads(head.global_net);
  grads.local = zero_projection_grads(head.local_net);
  grads.attn = zero_projection_grads(head.attn_net);
  grads.categories = Mat(head.categories.rows, head.categories.cols);
  grads.global.b2[0] = 0.25;  // a single nonzero gradient coordinate

  TrainConfig tc;
  tc.learning_rate = 0.001;
  const double before = head.global_net.b2[0];
  const double other = head.global_net.b2[1];
  adam_step(head, grads, adam, tc);
  // First step: mhat = g, vhat = g^2, so the update is ~lr * sign(g).
  CHECK(head.global_net.b2[0] ==
        doctest::Approx(before - 0.001).epsilon(1e-6));
  CHECK(head.global_net.b2[1] == other);
  CHECK(adam.step == 1);
}

TEST_CASE("training is bit-reproducible and validates its inputs") {
  Rng data_rng(22);
  TinyData data = make_tiny_data(data_rng, 14, 2, 4, kTinySpec);

  TrainInputs inputs;
  // Scenes 0..9 train, 10..11 val, 12..13 unused here.
  for (int i = 0; i < 10; ++i) inputs.train_pairs.push_back(data.pairs[i]);
  for (int i = 10; i < 12; ++i) inputs.val_pairs.push_back(data.pairs[i]);
  inputs.train_catalog = data.catalog;
  inputs.val_catalog = data.catalog;
  inputs.features = &data.features;
  inputs.n_categories = data.n_categories;

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.validate_every = 2;
  cfg.batch_size = 4;
  cfg.embed_dim = 8;
  cfg.seed = 5;
  cfg.eval_seed = 6;

  const TrainResult a = train(cfg, inputs);
  const TrainResult b = train(cfg, inputs);
  CHECK(checkpoints_equal(a.best, b.best));
  CHECK(checkpoints_equal(a.final_state, b.final_state));
  CHECK(a.history.epochs.size() == 4);
  CHECK(a.history.validations.size() == 2);
  REQUIRE(!a.history.validations.empty());
  CHECK(a.best.val_accuracy >= 0.0);

  TrainConfig other_seed = cfg;
  other_seed.seed = 77;
  const TrainResult c = train(other_seed, inputs);
  CHECK_FALSE(checkpoints_equal(a.final_state, c.final_state));

  TrainInputs empty = inputs;
  empty.train_pairs.clear();
  CHECK_THROWS_AS(train(cfg, empty), UsageError);
}

TEST_CASE("linear metric baseline gradient matches finite differences") {
  Rng data_rng(23);
  TinyData data = make_tiny_data(data_rng, 8, 2, 4, kTinySpec);
  Rng sampler(24);
  const auto triplets = sample_batch(data.pairs, data.catalog, sampler, 5);

  Rng init(25);
  Mat a(4, kTinySpec.d1);
  for (auto& w : a.a) w = init.normal() * 0.3;

  const Mat grad = linear_metric_grad(a, triplets, data.features, 0.5);
  const double eps = 1e-5;
  Rng coord(26);
  for (int c = 0; c < 40; ++c) {
    const std::size_t j = coord.below(a.size());
    const double orig = a.a[j];
    a.a[j] = orig + eps;
    const double lp = linear_metric_loss(a, triplets, data.features, 0.5);
    a.a[j] = orig - eps;
    const double lm = linear_metric_loss(a, triplets, data.features, 0.5);
    a.a[j] = orig;
    const double fd = (lp - lm) / (2 * eps);
    CHECK(grad.a[j] == doctest::Approx(fd).epsilon(1e-4));
  }
}
