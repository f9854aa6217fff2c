#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>

#include "ctl/eval.hpp"
#include "test_support.hpp"

using namespace ctl;
using ctl::testing::TinyData;
using ctl::testing::make_tiny_data;

namespace {

namespace fs = std::filesystem;

const FeatureSpec kSpec{6, 2, 2, 5};

class LambdaScorer : public Scorer {
 public:
  using Fn = std::function<double(const PairSample&, const std::string&)>;
  explicit LambdaScorer(Fn fn) : fn_(std::move(fn)) {}
  double score(const PairSample& pair, const std::string& pid) const override {
    return fn_(pair, pid);
  }
  std::string describe() const override { return "lambda"; }

 private:
  Fn fn_;
};

// Ground truth: a pair's own product scores strictly lowest.
LambdaScorer oracle_scorer() {
  return LambdaScorer([](const PairSample& pair, const std::string& pid) {
    return pid == pair.product_id ? 0.0 : 1.0;
  });
}

}  // namespace

TEST_CASE("make_questions draws valid negatives deterministically") {
  Rng data_rng(41);
  TinyData data = make_tiny_data(data_rng, 20, 3, 2, kSpec);

  const auto qa = make_questions(data.pairs, data.catalog, 7);
  const auto qb = make_questions(data.pairs, data.catalog, 7);
  REQUIRE(qa.size() == data.pairs.size());
  for (std::size_t i = 0; i < qa.size(); ++i) {
    CHECK(qa[i].neg_product != qa[i].pair.product_id);
    CHECK(qa[i].neg_product == qb[i].neg_product);
    // Two products per category: the negative is the other one.
    const auto& products = data.catalog[qa[i].pair.category_id];
    const std::string other =
        products[0] == qa[i].pair.product_id ? products[1] : products[0];
    CHECK(qa[i].neg_product == other);
  }

  Catalog singleton = data.catalog;
  singleton[data.pairs[0].category_id] = {data.pairs[0].product_id};
  CHECK_THROWS_AS(make_questions(data.pairs, singleton, 7),
                  SingletonCategoryError);
}

TEST_CASE("binary accuracy with the 0.5 tie rule") {
  Rng data_rng(42);
  TinyData data = make_tiny_data(data_rng, 30, 2, 6, kSpec);
  const auto questions = make_questions(data.pairs, data.catalog, 3);

  const LambdaScorer oracle = oracle_scorer();
  CHECK(binary_accuracy(oracle, questions) == 1.0);

  const LambdaScorer constant(
      [](const PairSample&, const std::string&) { return 0.25; });
  CHECK(binary_accuracy(constant, questions) == 0.5);

  CHECK_THROWS_AS(binary_accuracy(oracle, {}), UsageError);
}

TEST_CASE("a random scorer sits at chance over many questions") {
  Rng data_rng(43);
  TinyData data = make_tiny_data(data_rng, 500, 2, 10, kSpec);
  std::vector<PairSample> many;
  for (int rep = 0; rep < 20; ++rep) {
    for (auto p : data.pairs) {
      p.example_index = p.example_index + rep * 1000;  // distinct hash keys
      many.push_back(p);
    }
  }
  const auto questions = make_questions(many, data.catalog, 5);
  REQUIRE(questions.size() == 10000);
  const HashRandomScorer random(99);
  const double acc = binary_accuracy(random, questions);
  CHECK(acc > 0.48);
  CHECK(acc < 0.52);
}

TEST_CASE("pairwise accuracy equals rank AUC") {
  Rng data_rng(44);
  TinyData data = make_tiny_data(data_rng, 10, 2, 20, kSpec);

  // Scorers with and without ties.
  const HashRandomScorer random(7);
  const AucCheck rc = auc_equivalence_check(random, data.pairs, data.catalog);
  CHECK(std::abs(rc.pairwise_accuracy - rc.rank_auc) < 1e-12);

  PopularityScorer popularity(data.pairs);  // heavy ties (counts 0/1)
  const AucCheck pc =
      auc_equivalence_check(popularity, data.pairs, data.catalog);
  CHECK(std::abs(pc.pairwise_accuracy - pc.rank_auc) < 1e-12);

  // And both equal binary accuracy over the exhaustive question set.
  const auto all_questions = enumerate_all_questions(data.pairs, data.catalog);
  CHECK(std::abs(binary_accuracy(random, all_questions) - rc.rank_auc) < 1e-12);

  // Known contributions: positive ranked best of 5 and 3rd of 5.
  std::vector<PairSample> one;
  PairSample p;
  p.example_index = 0;
  p.scene_id = "s";
  p.product_id = "prod_0_0";
  p.category_id = 0;
  one.push_back(p);
  Catalog pool(1);
  pool[0] = {"prod_0_0", "prod_0_1", "prod_0_2", "prod_0_3", "prod_0_4"};
  const LambdaScorer best([](const PairSample&, const std::string& pid) {
    return pid == "prod_0_0" ? 0.0 : 1.0;
  });
  CHECK(auc_equivalence_check(best, one, pool).rank_auc == 1.0);
  const LambdaScorer third([](const PairSample&, const std::string& pid) {
    if (pid == "prod_0_1" || pid == "prod_0_2") return 0.0;
    if (pid == "prod_0_0") return 0.5;
    return 1.0;
  });
  CHECK(auc_equivalence_check(third, one, pool).rank_auc ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("top-K curve: monotone, exact endpoints, chance level") {
  Rng data_rng(45);
  TinyData data = make_tiny_data(data_rng, 500, 1, 20, kSpec);
  std::vector<int> ks;
  for (int k = 1; k <= 20; ++k) ks.push_back(k);

  const LambdaScorer oracle = oracle_scorer();
  const auto oracle_curve = topk_accuracy(oracle, data.pairs, data.catalog, ks);
  CHECK(oracle_curve.front().second == 1.0);

  const HashRandomScorer random(3);
  const auto curve = topk_accuracy(random, data.pairs, data.catalog, ks);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].second >= curve[i - 1].second);
  }
  CHECK(curve.back().second == 1.0);
  // Pool of 20 with one positive: accuracy at K is K/20 in expectation.
  CHECK(curve[4].second == doctest::Approx(0.25).epsilon(0.25));
}

TEST_CASE("crop-coordinate mapping for attention relevance") {
  const BBox crop{0.0, 0.5, 1.0, 1.0};
  const std::vector<BBox> scene_boxes = {
      BBox{0.25, 0.25, 0.75, 0.75},  // straddles the crop edge
      BBox{0.1, 0.0, 0.3, 0.4},      // fully outside the crop
  };
  const auto mapped = boxes_in_crop(crop, scene_boxes);
  REQUIRE(mapped.size() == 1);
  CHECK(mapped[0].x0 == doctest::Approx(0.25));
  CHECK(mapped[0].x1 == doctest::Approx(0.75));
  CHECK(mapped[0].y0 == doctest::Approx(0.0));
  CHECK(mapped[0].y1 == doctest::Approx(0.5));

  const auto rel = relevant_cells(2, 2, mapped, 0.5);
  // Cell (0,0) is [0,.5]x[0,.5]: overlap is (.25..5)x(0..5) = 1/2 of the cell.
  CHECK(rel[0]);
  CHECK(rel[1]);
  CHECK_FALSE(rel[2]);
  CHECK_FALSE(rel[3]);
}

TEST_CASE("attention hit rates: full coverage, exclusions, random baseline") {
  // Full-crop box: every region relevant, any ranking hits.
  const std::vector<BBox> full = {BBox{0.0, 0.0, 1.0, 1.0}};
  const auto all_relevant = relevant_cells(7, 7, full, 0.5);
  Rng rng(5);
  std::vector<Vec> maps;
  std::vector<std::vector<bool>> relevance;
  for (int i = 0; i < 10; ++i) {
    Vec w(49);
    double sum = 0.0;
    for (auto& v : w) {
      v = rng.uniform();
      sum += v;
    }
    for (auto& v : w) v /= sum;
    maps.push_back(w);
    relevance.push_back(all_relevant);
  }
  const auto stats = attention_hit_rate(maps, relevance, 1000, 1);
  CHECK(stats.top1 == 1.0);
  CHECK(stats.top3 == 1.0);
  CHECK(stats.random_top1_analytic == 1.0);
  CHECK(stats.evaluated == 10);
  CHECK(stats.excluded == 0);

  // No relevant regions: excluded from the denominator.
  std::vector<std::vector<bool>> none = {std::vector<bool>(49, false)};
  std::vector<Vec> one_map = {Vec(49, 1.0 / 49)};
  const auto excluded = attention_hit_rate(one_map, none, 100, 1);
  CHECK(excluded.evaluated == 0);
  CHECK(excluded.excluded == 1);

  // Random permutation ranking matches r/49 analytically and by MC.
  std::vector<Vec> uniform_maps;
  std::vector<std::vector<bool>> random_rel;
  Rng rel_rng(6);
  double expected = 0.0;
  const int n_examples = 50;
  for (int i = 0; i < n_examples; ++i) {
    std::vector<bool> rel(49, false);
    const int r = 1 + static_cast<int>(rel_rng.below(10));
    for (int j = 0; j < r; ++j) rel[rel_rng.below(49)] = true;
    int actual_r = 0;
    for (bool b : rel) actual_r += b ? 1 : 0;
    expected += static_cast<double>(actual_r) / 49.0;
    random_rel.push_back(rel);
    uniform_maps.push_back(Vec(49, 1.0 / 49));
  }
  expected /= n_examples;
  const auto rand_stats =
      attention_hit_rate(uniform_maps, random_rel, 10000, 77);
  CHECK(rand_stats.random_top1_analytic == doctest::Approx(expected).epsilon(1e-12));
  CHECK(rand_stats.random_top1_mc ==
        doctest::Approx(expected).epsilon(0.25));
  CHECK(std::abs(rand_stats.random_top1_mc - rand_stats.random_top1_analytic) <
        0.02);
}

TEST_CASE("model scorer agrees with score_pair") {
  Rng data_rng(46);
  TinyData data = make_tiny_data(data_rng, 6, 2, 3, kSpec);
  HeadConfig cfg;
  cfg.spec = kSpec;
  cfg.embed_dim = 8;
  cfg.n_categories = data.n_categories;
  Rng init(47);
  const Head head = init_head(cfg, init);

  const ModelScorer scorer(head, data.features);
  for (const auto& pair : data.pairs) {
    const auto s = score_pair(head, data.features.scene(pair.example_index),
                              data.features.product(pair.product_id),
                              pair.category_id);
    CHECK(scorer.score(pair, pair.product_id) ==
          doctest::Approx(s.hybrid).epsilon(1e-12));
    const Vec attn = scorer.attention_for(pair);
    for (std::size_t i = 0; i < attn.size(); ++i) {
      CHECK(attn[i] == doctest::Approx(s.attention[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("baseline scorers behave per contract") {
  Rng data_rng(48);
  TinyData data = make_tiny_data(data_rng, 10, 1, 5, kSpec);

  std::vector<PairSample> train_pairs;
  for (int i = 0; i < 7; ++i) train_pairs.push_back(data.pairs[0]);
  for (int i = 0; i < 2; ++i) train_pairs.push_back(data.pairs[1]);
  const PopularityScorer pop(train_pairs);
  CHECK(pop.score(data.pairs[2], data.pairs[0].product_id) <
        pop.score(data.pairs[2], data.pairs[1].product_id));
  CHECK(pop.score(data.pairs[2], "never-seen") == 0.0);

  const RawFeatureScorer raw(data.features);
  // Identical features score zero; use a scene whose global was copied.
  TinyData twin = data;
  twin.features.products["clone"] =
      GlobalFeature{twin.features.scenes[0].global.v};
  const RawFeatureScorer raw_twin(twin.features);
  CHECK(raw_twin.score(twin.pairs[0], "clone") == 0.0);
  CHECK(raw.score(data.pairs[0], data.pairs[0].product_id) > 0.0);

  // Identity linear map reduces to the squared raw-feature distance.
  Mat eye(kSpec.d1, kSpec.d1);
  for (int i = 0; i < kSpec.d1; ++i) eye(i, i) = 1.0;
  const LinearMetricScorer linear(eye, data.features);
  const double rd = raw.score(data.pairs[0], data.pairs[1].product_id);
  CHECK(linear.score(data.pairs[0], data.pairs[1].product_id) ==
        doctest::Approx(rd * rd).epsilon(1e-9));
}

TEST_CASE("report artifacts") {
  EvalReport report;
  report.scorer = "model:G+L";
  report.binary_acc = 0.875;
  report.n_questions = 40;
  report.per_category["tops"] = 0.9;
  report.per_category_n["tops"] = 20;
  report.topk = {{1, 0.25}, {2, 0.5}, {3, 0.75}};
  report.eval_seed = 101;
  report.config_hash = "deadbeef";

  const auto dir = fs::temp_directory_path() / "ctl_eval_report";
  fs::create_directories(dir);
  const std::string json_path = (dir / "report.json").string();
  write_report_json(json_path, report);
  std::ifstream in(json_path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("0.875") != std::string::npos);
  CHECK(text.find("deadbeef") != std::string::npos);

  const std::string csv_path = (dir / "topk.csv").string();
  write_topk_csv(csv_path, report.topk);
  std::ifstream csv(csv_path);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "K,accuracy");

  const std::string pgm_path = (dir / "map.pgm").string();
  Vec weights(49, 1.0 / 49);
  weights[10] = 0.5;
  write_attention_pgm(pgm_path, weights, 7, 7);
  std::ifstream pgm(pgm_path, std::ios::binary);
  std::string header;
  std::getline(pgm, header);
  CHECK(header == "P5");
  std::string pgm_all((std::istreambuf_iterator<char>(pgm)),
                      std::istreambuf_iterator<char>());
  CHECK(pgm_all.find("7 7") != std::string::npos);

  const std::string formatted = format_report_text(report);
  CHECK(formatted.find("binary accuracy") != std::string::npos);
}
