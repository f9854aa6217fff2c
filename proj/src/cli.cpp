#include "ctl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctl/errors.hpp"
#include "ctl/eval.hpp"
#include "ctl/experiments.hpp"
#include "ctl/hashing.hpp"
#include "ctl/manifest.hpp"
#include "ctl/synth.hpp"
#include "ctl/training.hpp"

namespace ctl::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kArtifactVersion = "0.1.0";

struct Options {
  // inputs and outputs
  std::string stl_manifest, ctl_manifest, splits, images_root, cache;
  std::string out;  // main output path of the subcommand
  std::string final_out, history_out, resume;
  std::string checkpoint, report, report_json, topk_csv, export_dir;
  std::string baseline;
  bool verify_images = false;

  // seeds
  std::uint64_t data_seed = 11;
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 101;
  std::uint64_t backbone_seed = 7;

  // cropping
  double expand_frac = 0.05;
  double min_area_frac = 0.2;
  std::string mode = "fashion";
  std::string excluded_categories = "dresses";

  // split ratios
  std::string ratios = "0.8,0.1,0.1";

  // backbone
  std::string backbone = "toy";
  int d1 = 64, map_w = 7, map_h = 7, d2 = 32;
  bool include_full_scenes = false;
  std::string scene_variant = "cropped";

  // training
  double margin = 0.2, learning_rate = 0.001, dropout = 0.5;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  int batch_size = 16, epochs = 100, validate_every = 10, embed_dim = 128;
  std::string variant = "G+L";

  // synth
  int n_scenes = 200, n_categories = 5, n_products = 20, image_size = 128;
  int pairs_per_scene = 2, palette_size = 27, color_jitter = 35,
      scene_jitter = 0, n_distractors = 5;
  double bbox_min = 0.30, bbox_max = 0.55;
  bool paste = false;
  std::string rule = "color-match";
  std::uint64_t synth_seed = 1;

  // evaluation
  int topk_max = 0;
  int mc_trials = 10000;
};

CropConfig crop_config(const Options& o) {
  CropConfig cfg;
  cfg.expand_frac = o.expand_frac;
  cfg.min_area_frac = o.min_area_frac;
  cfg.mode = crop_mode_from_string(o.mode);
  cfg.excluded_categories.clear();
  std::stringstream ss(o.excluded_categories);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) cfg.excluded_categories.insert(item);
  }
  return cfg;
}

TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.margin = o.margin;
  cfg.batch_size = o.batch_size;
  cfg.epochs = o.epochs;
  cfg.validate_every = o.validate_every;
  cfg.learning_rate = o.learning_rate;
  cfg.adam_beta1 = o.adam_beta1;
  cfg.adam_beta2 = o.adam_beta2;
  cfg.adam_eps = o.adam_eps;
  cfg.dropout = o.dropout;
  cfg.seed = o.train_seed;
  cfg.eval_seed = o.eval_seed;
  cfg.variant = variant_from_string(o.variant);
  cfg.embed_dim = o.embed_dim;
  return cfg;
}

FeatureSpec feature_spec(const Options& o) {
  FeatureSpec spec;
  spec.d1 = o.d1;
  spec.map_w = o.map_w;
  spec.map_h = o.map_h;
  spec.d2 = o.d2;
  return spec;
}

SynthParams synth_params(const Options& o) {
  SynthParams p;
  p.n_scenes = o.n_scenes;
  p.n_categories = o.n_categories;
  p.n_products = o.n_products;
  p.image_size = o.image_size;
  p.paste_product_into_scene = o.paste;
  p.rule = o.rule;
  p.seed = o.synth_seed;
  p.pairs_per_scene = o.pairs_per_scene;
  p.palette_size = o.palette_size;
  p.color_jitter = o.color_jitter;
  p.scene_jitter = o.scene_jitter;
  p.n_distractors = o.n_distractors;
  p.bbox_min = o.bbox_min;
  p.bbox_max = o.bbox_max;
  p.out_dir = o.out;
  return p;
}

// Canonical dump of every semantically meaningful field (paths excluded);
// its hash is recorded next to each output.
std::string semantic_config_dump(const Options& o) {
  std::ostringstream s;
  s << "adam_beta1=" << o.adam_beta1 << "\n"
    << "adam_beta2=" << o.adam_beta2 << "\n"
    << "adam_eps=" << o.adam_eps << "\n"
    << "backbone=" << o.backbone << "\n"
    << "backbone_seed=" << o.backbone_seed << "\n"
    << "baseline=" << o.baseline << "\n"
    << "batch_size=" << o.batch_size << "\n"
    << "bbox_max=" << o.bbox_max << "\n"
    << "bbox_min=" << o.bbox_min << "\n"
    << "color_jitter=" << o.color_jitter << "\n"
    << "d1=" << o.d1 << "\n"
    << "d2=" << o.d2 << "\n"
    << "data_seed=" << o.data_seed << "\n"
    << "dropout=" << o.dropout << "\n"
    << "embed_dim=" << o.embed_dim << "\n"
    << "epochs=" << o.epochs << "\n"
    << "eval_seed=" << o.eval_seed << "\n"
    << "excluded_categories=" << o.excluded_categories << "\n"
    << "expand_frac=" << o.expand_frac << "\n"
    << "image_size=" << o.image_size << "\n"
    << "include_full_scenes=" << o.include_full_scenes << "\n"
    << "learning_rate=" << o.learning_rate << "\n"
    << "map_h=" << o.map_h << "\n"
    << "map_w=" << o.map_w << "\n"
    << "margin=" << o.margin << "\n"
    << "mc_trials=" << o.mc_trials << "\n"
    << "min_area_frac=" << o.min_area_frac << "\n"
    << "mode=" << o.mode << "\n"
    << "n_categories=" << o.n_categories << "\n"
    << "n_distractors=" << o.n_distractors << "\n"
    << "n_products=" << o.n_products << "\n"
    << "n_scenes=" << o.n_scenes << "\n"
    << "pairs_per_scene=" << o.pairs_per_scene << "\n"
    << "palette_size=" << o.palette_size << "\n"
    << "paste=" << o.paste << "\n"
    << "ratios=" << o.ratios << "\n"
    << "rule=" << o.rule << "\n"
    << "scene_jitter=" << o.scene_jitter << "\n"
    << "scene_variant=" << o.scene_variant << "\n"
    << "synth_seed=" << o.synth_seed << "\n"
    << "topk_max=" << o.topk_max << "\n"
    << "train_seed=" << o.train_seed << "\n"
    << "validate_every=" << o.validate_every << "\n"
    << "variant=" << o.variant << "\n";
  return s.str();
}

std::string config_hash(const Options& o) {
  return hex64(fnv1a64(semantic_config_dump(o)));
}

void write_meta(const std::string& output_path, const std::string& command,
                const Options& o) {
  nlohmann::json j;
  j["artifact_version"] = kArtifactVersion;
  j["command"] = command;
  j["config_hash"] = config_hash(o);
  j["seeds"] = {{"data_seed", o.data_seed},
                {"train_seed", o.train_seed},
                {"eval_seed", o.eval_seed},
                {"backbone_seed", o.backbone_seed},
                {"synth_seed", o.synth_seed}};
  std::ofstream out(output_path + ".meta.json", std::ios::binary);
  if (!out) throw IoError("cannot write metadata for '" + output_path + "'");
  out << j.dump(2) << "\n";
}

std::array<double, 3> parse_ratios(const std::string& s) {
  std::array<double, 3> r{};
  std::stringstream ss(s);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',') && i < 3) {
    r[i++] = std::stod(item);
  }
  if (i != 3) throw UsageError("ratios must be three comma-separated numbers");
  return r;
}

std::string default_images_root(const Options& o) {
  if (!o.images_root.empty()) return o.images_root;
  if (!o.ctl_manifest.empty()) {
    return fs::path(o.ctl_manifest).parent_path().string();
  }
  return ".";
}

struct LoadedData {
  CTLManifest manifest;
  SplitAssignment splits;
  DataView view;
};

LoadedData load_data(const Options& o) {
  if (o.ctl_manifest.empty()) throw UsageError("--ctl manifest is required");
  if (o.splits.empty()) throw UsageError("--splits file is required");
  LoadedData d;
  d.manifest = read_ctl_manifest(o.ctl_manifest);
  d.splits = read_split_file(o.splits);
  d.view = build_data_view(d.manifest, d.splits);
  return d;
}

FeatureTable make_feature_table(const Options& o, const CTLManifest& manifest) {
  const SceneVariant variant = scene_variant_from_string(o.scene_variant);
  const std::string root = default_images_root(o);
  if (o.backbone == "toy") {
    ToyBackbone backbone(feature_spec(o), o.backbone_seed);
    return build_feature_table(manifest, root, backbone, variant);
  }
  if (o.backbone == "precomputed") {
    if (o.cache.empty()) {
      throw UsageError("backbone=precomputed requires --cache");
    }
    const FeatureCache cache = read_feature_cache(o.cache);
    return build_feature_table(manifest, root, cache, variant);
  }
  throw UsageError("unknown backbone '" + o.backbone +
                   "' (expected toy|precomputed)");
}

// Keeps the checkpoint alive for scorers that reference its head.
struct ScorerBundle {
  std::unique_ptr<Checkpoint> checkpoint;
  std::unique_ptr<Mat> linear;
  std::unique_ptr<Scorer> scorer;
};

ScorerBundle make_scorer(const Options& o, const LoadedData& data,
                         const FeatureTable& features) {
  ScorerBundle bundle;
  if (!o.checkpoint.empty() && !o.baseline.empty()) {
    throw UsageError("--checkpoint and --baseline are mutually exclusive");
  }
  if (!o.checkpoint.empty()) {
    bundle.checkpoint =
        std::make_unique<Checkpoint>(load_checkpoint(o.checkpoint));
    bundle.scorer =
        std::make_unique<ModelScorer>(bundle.checkpoint->head, features);
    return bundle;
  }
  if (o.baseline == "popularity") {
    bundle.scorer = std::make_unique<PopularityScorer>(data.view.train);
  } else if (o.baseline == "rawfeature") {
    bundle.scorer = std::make_unique<RawFeatureScorer>(features);
  } else if (o.baseline == "linear") {
    const TrainInputs inputs = make_train_inputs(data.view, features);
    bundle.linear = std::make_unique<Mat>(
        train_linear_metric(train_config(o), inputs, o.embed_dim));
    bundle.scorer =
        std::make_unique<LinearMetricScorer>(*bundle.linear, features);
  } else if (o.baseline == "random") {
    bundle.scorer = std::make_unique<HashRandomScorer>(o.eval_seed);
  } else if (o.baseline.empty()) {
    throw UsageError("provide --checkpoint or --baseline");
  } else {
    throw UsageError("unknown baseline '" + o.baseline +
                     "' (popularity|rawfeature|linear|random)");
  }
  return bundle;
}

std::vector<int> topk_ks(const Options& o, const DataView& view) {
  std::size_t max_pool = 0;
  for (const auto& products : view.test_catalog) {
    max_pool = std::max(max_pool, products.size());
  }
  int upto = o.topk_max > 0 ? o.topk_max : static_cast<int>(max_pool);
  upto = std::max(upto, 1);
  std::vector<int> ks;
  for (int k = 1; k <= upto; ++k) ks.push_back(k);
  return ks;
}

// Attention maps and relevance grids for the test examples, aligned.
struct AttentionData {
  std::vector<Vec> maps;
  std::vector<std::vector<bool>> relevance;
  std::vector<int> example_indices;
};

AttentionData gather_attention_data(const LoadedData& data,
                                    const ModelScorer& scorer,
                                    const FeatureSpec& spec) {
  std::map<std::string, std::vector<BBox>> scene_boxes;
  for (const auto& ex : data.manifest.examples) {
    scene_boxes[ex.pair.scene_id].push_back(ex.pair.bbox);
  }
  AttentionData out;
  for (const auto& pair : data.view.test) {
    const auto& ex = data.manifest.examples[pair.example_index];
    const auto crop_boxes =
        boxes_in_crop(ex.crop, scene_boxes.at(ex.pair.scene_id));
    out.relevance.push_back(
        relevant_cells(spec.map_w, spec.map_h, crop_boxes, 0.5));
    out.maps.push_back(scorer.attention_for(pair));
    out.example_indices.push_back(pair.example_index);
  }
  return out;
}

std::map<std::string, double> named_per_category(
    const std::map<int, std::pair<double, std::int64_t>>& by_id,
    const std::vector<Category>& table,
    std::map<std::string, std::int64_t>* counts) {
  std::map<std::string, double> named;
  for (const auto& [id, entry] : by_id) {
    named[table[id].name] = entry.first;
    if (counts != nullptr) (*counts)[table[id].name] = entry.second;
  }
  return named;
}

// ---- subcommands -----------------------------------------------------------

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw UsageError("synth requires --out <directory>");
  const SynthResult result = synth_dataset(synth_params(o));
  write_meta(result.manifest_path, "synth", o);
  std::cerr << "synth: wrote " << result.pairs.size() << " pairs under "
            << o.out << "\n";
  return 0;
}

int cmd_generate(const Options& o) {
  if (o.stl_manifest.empty()) throw UsageError("generate requires --stl");
  if (o.out.empty()) throw UsageError("generate requires --out");
  const auto pairs = read_stl_manifest(o.stl_manifest);
  if (o.verify_images) {
    const std::string root =
        o.images_root.empty() ? fs::path(o.stl_manifest).parent_path().string()
                              : o.images_root;
    for (const auto& p : pairs) {
      for (const auto& rel : {p.scene_path, p.product_path}) {
        const fs::path full = fs::path(root) / rel;
        if (!fs::exists(full)) {
          throw MissingImageError("referenced image '" + full.string() +
                                  "' does not exist");
        }
      }
    }
  }
  CTLManifest manifest = generate_ctl(pairs, crop_config(o));
  write_ctl_manifest(o.out, manifest);
  write_meta(o.out, "generate", o);
  std::cerr << "generate: kept=" << manifest.stats.kept;
  for (const auto& [reason, count] : manifest.stats.discarded) {
    std::cerr << " discarded_" << reason << "=" << count;
  }
  std::cerr << " of " << manifest.stats.input_pairs << " pairs\n";
  return 0;
}

int cmd_split(const Options& o) {
  if (o.ctl_manifest.empty()) throw UsageError("split requires --ctl");
  if (o.out.empty()) throw UsageError("split requires --out");
  const CTLManifest manifest = read_ctl_manifest(o.ctl_manifest);
  std::vector<std::string> scene_ids;
  for (const auto& ex : manifest.examples) {
    scene_ids.push_back(ex.pair.scene_id);
  }
  const SplitAssignment splits =
      split_scenes(scene_ids, parse_ratios(o.ratios), o.data_seed);
  write_split_file(o.out, splits);
  write_meta(o.out, "split", o);
  std::map<std::string, int> counts;
  for (const auto& [id, split] : splits.by_scene) ++counts[to_string(split)];
  std::cerr << "split: train=" << counts["train"] << " val=" << counts["val"]
            << " test=" << counts["test"] << " scenes\n";
  return 0;
}

int cmd_features(const Options& o) {
  if (o.ctl_manifest.empty()) throw UsageError("features requires --ctl");
  if (o.out.empty()) throw UsageError("features requires --out");
  if (o.backbone != "toy") {
    throw UsageError("the features command computes toy-backbone features; "
                     "external features are written by their own tooling");
  }
  const CTLManifest manifest = read_ctl_manifest(o.ctl_manifest);
  ToyBackbone backbone(feature_spec(o), o.backbone_seed);
  const auto records = compute_feature_records(
      manifest, default_images_root(o), backbone, o.include_full_scenes);
  write_feature_cache(o.out, backbone.spec(), records);
  write_meta(o.out, "features", o);
  std::cerr << "features: cached " << records.size() << " images\n";
  return 0;
}

int cmd_train(const Options& o) {
  if (o.out.empty()) throw UsageError("train requires --out <checkpoint>");
  const LoadedData data = load_data(o);
  const FeatureTable features = make_feature_table(o, data.manifest);
  const TrainInputs inputs = make_train_inputs(data.view, features);
  std::optional<Checkpoint> resume;
  if (!o.resume.empty()) resume = load_checkpoint(o.resume);

  const TrainResult result = train(train_config(o), inputs, resume);
  save_checkpoint(o.out, result.best);
  write_meta(o.out, "train", o);
  if (!o.final_out.empty()) {
    save_checkpoint(o.final_out, result.final_state);
    write_meta(o.final_out, "train", o);
  }
  if (!o.history_out.empty()) {
    write_history_csv(o.history_out, result.history);
    write_meta(o.history_out, "train", o);
  }
  std::cerr << "train: best val accuracy " << result.best.val_accuracy
            << " at epoch " << result.best.epoch << "\n";
  return 0;
}

int cmd_ablate(const Options& o) {
  if (o.out.empty()) throw UsageError("ablate requires --out <json>");
  const LoadedData data = load_data(o);
  const FeatureTable features = make_feature_table(o, data.manifest);
  const TrainInputs inputs = make_train_inputs(data.view, features);
  const auto questions =
      make_questions(data.view.test, data.view.test_catalog, o.eval_seed);
  const AblationRun run = run_ablations(train_config(o), inputs, questions);

  nlohmann::json j;
  j["accuracy"] = run.accuracy;
  j["config_hash"] = config_hash(o);
  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw IoError("cannot open '" + o.out + "' for writing");
  out << j.dump(2) << "\n";
  write_meta(o.out, "ablate", o);
  for (const auto& [name, acc] : run.accuracy) {
    std::cout << name << "\t" << acc << "\n";
  }
  return 0;
}

int cmd_eval(const Options& o, const char* command) {
  const LoadedData data = load_data(o);
  const FeatureTable features = make_feature_table(o, data.manifest);
  const ScorerBundle bundle = make_scorer(o, data, features);

  const auto questions =
      make_questions(data.view.test, data.view.test_catalog, o.eval_seed);
  EvalReport report;
  report.scorer = bundle.scorer->describe();
  report.binary_acc = binary_accuracy(*bundle.scorer, questions);
  report.n_questions = static_cast<std::int64_t>(questions.size());
  report.per_category = named_per_category(
      per_category_accuracy(*bundle.scorer, questions),
      data.manifest.categories, &report.per_category_n);
  report.topk = topk_accuracy(*bundle.scorer, data.view.test,
                              data.view.test_catalog, topk_ks(o, data.view));
  if (bundle.checkpoint != nullptr) {
    const auto* model = dynamic_cast<const ModelScorer*>(bundle.scorer.get());
    const AttentionData att = gather_attention_data(
        data, *model, bundle.checkpoint->head_cfg.spec);
    report.attention = attention_hit_rate(att.maps, att.relevance,
                                          o.mc_trials, o.eval_seed);
  }
  report.eval_seed = o.eval_seed;
  report.config_hash = config_hash(o);

  if (!o.report_json.empty()) {
    write_report_json(o.report_json, report);
    write_meta(o.report_json, command, o);
  }
  if (!o.topk_csv.empty()) {
    write_topk_csv(o.topk_csv, report.topk);
    write_meta(o.topk_csv, command, o);
  }
  const std::string text = format_report_text(report);
  if (!o.report.empty()) {
    std::ofstream out(o.report, std::ios::binary);
    if (!out) throw IoError("cannot open '" + o.report + "' for writing");
    out << text;
    write_meta(o.report, command, o);
  }
  std::cout << text;
  return 0;
}

int cmd_topk(const Options& o) {
  if (o.topk_csv.empty()) throw UsageError("topk requires --topk-csv");
  const LoadedData data = load_data(o);
  const FeatureTable features = make_feature_table(o, data.manifest);
  const ScorerBundle bundle = make_scorer(o, data, features);
  const auto curve = topk_accuracy(*bundle.scorer, data.view.test,
                                   data.view.test_catalog, topk_ks(o, data.view));
  write_topk_csv(o.topk_csv, curve);
  write_meta(o.topk_csv, "topk", o);
  for (const auto& [k, acc] : curve) std::cout << k << "," << acc << "\n";
  return 0;
}

int cmd_attention(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("attention requires --checkpoint");
  const LoadedData data = load_data(o);
  const FeatureTable features = make_feature_table(o, data.manifest);
  const ScorerBundle bundle = make_scorer(o, data, features);
  const auto* model = dynamic_cast<const ModelScorer*>(bundle.scorer.get());

  const AttentionData att = gather_attention_data(
      data, *model, bundle.checkpoint->head_cfg.spec);
  const AttentionHitStats stats =
      attention_hit_rate(att.maps, att.relevance, o.mc_trials, o.eval_seed);

  if (!o.export_dir.empty()) {
    fs::create_directories(o.export_dir);
    for (std::size_t i = 0; i < att.maps.size(); ++i) {
      const std::string path =
          (fs::path(o.export_dir) /
           ("ex" + std::to_string(att.example_indices[i]) + ".pgm"))
              .string();
      write_attention_pgm(path, att.maps[i],
                          bundle.checkpoint->head_cfg.spec.map_w,
                          bundle.checkpoint->head_cfg.spec.map_h);
    }
    write_meta((fs::path(o.export_dir) / "maps").string(), "attention", o);
  }
  if (!o.report_json.empty()) {
    nlohmann::json j;
    j["top1"] = stats.top1;
    j["top3"] = stats.top3;
    j["random_top1_analytic"] = stats.random_top1_analytic;
    j["random_top3_analytic"] = stats.random_top3_analytic;
    j["random_top1_mc"] = stats.random_top1_mc;
    j["random_top3_mc"] = stats.random_top3_mc;
    j["evaluated"] = stats.evaluated;
    j["excluded"] = stats.excluded;
    j["config_hash"] = config_hash(o);
    std::ofstream out(o.report_json, std::ios::binary);
    if (!out) throw IoError("cannot open '" + o.report_json + "' for writing");
    out << j.dump(2) << "\n";
    write_meta(o.report_json, "attention", o);
  }
  std::cout << "attention hits: top1=" << stats.top1 << " top3=" << stats.top3
            << " random_top1=" << stats.random_top1_analytic
            << " (analytic) / " << stats.random_top1_mc << " (mc)"
            << " evaluated=" << stats.evaluated
            << " excluded=" << stats.excluded << "\n";
  return 0;
}

void add_common_options(CLI::App* cmd, Options& o) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--ctl", o.ctl_manifest, "CTL manifest path");
  cmd->add_option("--splits", o.splits, "split assignment file");
  cmd->add_option("--images-root", o.images_root,
                  "base directory for manifest-relative image paths");
  cmd->add_option("--cache", o.cache, "feature cache file");
  cmd->add_option("--backbone", o.backbone, "toy|precomputed");
  cmd->add_option("--backbone-seed", o.backbone_seed, "toy backbone seed");
  cmd->add_option("--d1", o.d1, "global feature dim");
  cmd->add_option("--d2", o.d2, "feature-map channel dim");
  cmd->add_option("--map-w", o.map_w, "feature-map grid width");
  cmd->add_option("--map-h", o.map_h, "feature-map grid height");
  cmd->add_option("--scene-variant", o.scene_variant,
                  "train/eval scene images: cropped|full");
  cmd->add_option("--data-seed", o.data_seed, "dataset split seed");
  cmd->add_option("--train-seed", o.train_seed, "training seed");
  cmd->add_option("--eval-seed", o.eval_seed, "evaluation question seed");
}

void add_train_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--margin", o.margin, "triplet hinge margin");
  cmd->add_option("--batch-size", o.batch_size, "triplets per batch");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--validate-every", o.validate_every,
                  "validation cadence in epochs");
  cmd->add_option("--learning-rate", o.learning_rate, "Adam learning rate");
  cmd->add_option("--adam-beta1", o.adam_beta1, "Adam beta1");
  cmd->add_option("--adam-beta2", o.adam_beta2, "Adam beta2");
  cmd->add_option("--adam-eps", o.adam_eps, "Adam epsilon");
  cmd->add_option("--dropout", o.dropout, "dropout rate");
  cmd->add_option("--variant", o.variant, "model variant: G+L|G|L|G+L0");
  cmd->add_option("--embed-dim", o.embed_dim, "style embedding dim");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  Options o;

  CLI::App app{"Scene-product compatibility pipeline"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* synth = app.add_subcommand("synth", "generate a planted-rule dataset");
  synth->add_option("--out", o.out, "output directory");
  synth->add_option("--n-scenes", o.n_scenes, "scene count");
  synth->add_option("--n-categories", o.n_categories, "category count");
  synth->add_option("--n-products", o.n_products, "products per category");
  synth->add_option("--image-size", o.image_size, "square image side");
  synth->add_option("--pairs-per-scene", o.pairs_per_scene, "pairs per scene");
  synth->add_option("--palette-size", o.palette_size, "colors in play (<=27)");
  synth->add_option("--color-jitter", o.color_jitter,
                    "per-product color jitter");
  synth->add_option("--scene-jitter", o.scene_jitter,
                    "per-scene background shade jitter");
  synth->add_option("--n-distractors", o.n_distractors,
                    "distractor rectangles per scene");
  synth->add_option("--bbox-min", o.bbox_min, "smallest product box side");
  synth->add_option("--bbox-max", o.bbox_max, "largest product box side");
  synth->add_flag("--paste", o.paste, "draw positives into scenes");
  synth->add_option("--rule", o.rule, "planted rule id");
  synth->add_option("--synth-seed", o.synth_seed, "generator seed");

  auto* generate = app.add_subcommand("generate", "derive CTL data from STL");
  generate->add_option("--stl", o.stl_manifest, "STL manifest");
  generate->add_option("--out", o.out, "CTL manifest output");
  generate->add_option("--images-root", o.images_root, "image base directory");
  generate->add_option("--mode", o.mode, "fashion|home");
  generate->add_option("--expand-frac", o.expand_frac, "bbox expansion");
  generate->add_option("--min-area-frac", o.min_area_frac,
                       "minimum crop area fraction");
  generate->add_option("--excluded-categories", o.excluded_categories,
                       "comma-separated discard list");
  generate->add_flag("--verify-images", o.verify_images,
                     "require referenced images to exist");

  auto* split = app.add_subcommand("split", "assign scenes to train/val/test");
  split->add_option("--ctl", o.ctl_manifest, "CTL manifest");
  split->add_option("--out", o.out, "split file output");
  split->add_option("--ratios", o.ratios, "train,val,test ratios");
  split->add_option("--data-seed", o.data_seed, "shuffle seed");

  auto* features = app.add_subcommand("features", "compute the feature cache");
  add_common_options(features, o);
  features->add_option("--out", o.out, "cache file output");
  features->add_flag("--include-full-scenes", o.include_full_scenes,
                     "also cache uncropped scene features");

  auto* train_cmd = app.add_subcommand("train", "train the compatibility head");
  add_common_options(train_cmd, o);
  add_train_options(train_cmd, o);
  train_cmd->add_option("--out", o.out, "best checkpoint output");
  train_cmd->add_option("--final-out", o.final_out,
                        "end-of-run checkpoint output");
  train_cmd->add_option("--history-out", o.history_out, "loss history CSV");
  train_cmd->add_option("--resume", o.resume, "checkpoint to resume from");

  auto* ablate = app.add_subcommand("ablate", "train and score all variants");
  add_common_options(ablate, o);
  add_train_options(ablate, o);
  ablate->add_option("--out", o.out, "result table (JSON)");

  auto* eval_cmd = app.add_subcommand("eval", "full evaluation report");
  add_common_options(eval_cmd, o);
  add_train_options(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  eval_cmd->add_option("--baseline", o.baseline,
                       "popularity|rawfeature|linear|random");
  eval_cmd->add_option("--report", o.report, "text report output");
  eval_cmd->add_option("--report-json", o.report_json, "JSON report output");
  eval_cmd->add_option("--topk-csv", o.topk_csv, "top-K curve CSV output");
  eval_cmd->add_option("--topk-max", o.topk_max, "largest K (0 = pool size)");
  eval_cmd->add_option("--mc-trials", o.mc_trials,
                       "Monte Carlo trials for random baselines");

  auto* topk = app.add_subcommand("topk", "top-K accuracy curve");
  add_common_options(topk, o);
  add_train_options(topk, o);
  topk->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  topk->add_option("--baseline", o.baseline, "baseline scorer");
  topk->add_option("--topk-csv", o.topk_csv, "curve CSV output");
  topk->add_option("--topk-max", o.topk_max, "largest K (0 = pool size)");

  auto* attention = app.add_subcommand("attention", "attention-region hits");
  add_common_options(attention, o);
  attention->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  attention->add_option("--report-json", o.report_json, "JSON stats output");
  attention->add_option("--export-dir", o.export_dir,
                        "directory for PGM attention maps");
  attention->add_option("--mc-trials", o.mc_trials, "Monte Carlo trials");

  auto* baseline = app.add_subcommand("baseline", "evaluate a baseline scorer");
  add_common_options(baseline, o);
  add_train_options(baseline, o);
  baseline->add_option("--baseline", o.baseline,
                       "popularity|rawfeature|linear|random")
      ->required();
  baseline->add_option("--report", o.report, "text report output");
  baseline->add_option("--report-json", o.report_json, "JSON report output");
  baseline->add_option("--topk-csv", o.topk_csv, "top-K curve CSV output");
  baseline->add_option("--topk-max", o.topk_max, "largest K (0 = pool size)");

  // --config FILE provides defaults; explicit flags win. The file is a flat
  // `key=value` list using the long option names without the leading dashes.
  std::vector<std::string> argv = args;
  std::string config_path;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--config" && i + 1 < argv.size()) {
      config_path = argv[i + 1];
      argv.erase(argv.begin() + static_cast<std::ptrdiff_t>(i),
                 argv.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (argv[i].rfind("--config=", 0) == 0) {
      config_path = argv[i].substr(9);
      argv.erase(argv.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "UsageError: cannot open config '" << config_path << "'\n";
      return 2;
    }
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) continue;
      injected.push_back("--" + key + "=" + value);
    }
    // Insert after the subcommand token so they bind to its options.
    if (argv.empty()) {
      std::cerr << "UsageError: --config requires a subcommand\n";
      return 2;
    }
    argv.insert(argv.begin() + 1, injected.begin(), injected.end());
  }

  try {
    try {
      // CLI11 wants argc/argv-style reversed vector.
      std::vector<std::string> reversed(argv.rbegin(), argv.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (synth->parsed()) return cmd_synth(o);
    if (generate->parsed()) return cmd_generate(o);
    if (split->parsed()) return cmd_split(o);
    if (features->parsed()) return cmd_features(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (eval_cmd->parsed()) return cmd_eval(o, "eval");
    if (topk->parsed()) return cmd_topk(o);
    if (attention->parsed()) return cmd_attention(o);
    if (baseline->parsed()) return cmd_eval(o, "baseline");
    std::cerr << "UsageError: no subcommand given\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ctl::cli
