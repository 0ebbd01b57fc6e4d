// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.
//
// Command-line surface for the lab: dataset generation, training, checkpoint
// evaluation, and multi-run comparison reports. One command per process; all
// state lives on the filesystem. Flags override config-file keys.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mixdet/checkpoint.hpp"
#include "mixdet/config.hpp"
#include "mixdet/data.hpp"
#include "mixdet/report.hpp"
#include "mixdet/trainer.hpp"

namespace {

using namespace mixdet;

double to_points(double v01) { return v01 * 100.0; }

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::string out;
  long long n_labeled = -1, n_unlabeled = -1, n_eval = -1;
  long long seed = -1;
  bool force = false;
};

int cmd_generate(const GenerateArgs& args) {
  LabConfig cfg = args.config.empty() ? LabConfig{} : load_lab_config(args.config);
  if (!args.out.empty()) cfg.data.dir = args.out;
  if (args.n_labeled >= 0) cfg.data.n_labeled = static_cast<std::size_t>(args.n_labeled);
  if (args.n_unlabeled >= 0) cfg.data.n_unlabeled = static_cast<std::size_t>(args.n_unlabeled);
  if (args.n_eval >= 0) cfg.data.n_eval = static_cast<std::size_t>(args.n_eval);
  if (args.seed >= 0) cfg.data.spec.seed = static_cast<std::uint64_t>(args.seed);

  const SplitManifest manifest = generate_dataset(
      cfg.data.spec, static_cast<int>(cfg.data.n_labeled),
      static_cast<int>(cfg.data.n_unlabeled), static_cast<int>(cfg.data.n_eval),
      cfg.data.dir, args.force);
  std::printf("wrote %s: %zu labeled / %zu unlabeled / %zu eval images (%dx%d, seed %llu)\n",
              cfg.data.dir.c_str(), manifest.labeled.size(), manifest.unlabeled.size(),
              manifest.eval_ids.size(), cfg.data.spec.image_size, cfg.data.spec.image_size,
              static_cast<unsigned long long>(cfg.data.spec.seed));
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string mode;
  std::string types;
  double alpha = -1.0, gamma1 = -1.0, gamma2 = -1.0;
  long long seed = -1;
  long long iterations = -1;
};

TrainDatasets load_train_datasets(const std::string& dir, const ArchConfig& arch) {
  const DatasetInfo info = read_dataset_info(dir);
  if (info.image_size != arch.input_size) {
    throw std::runtime_error("train: dataset image size " + std::to_string(info.image_size) +
                             " does not match configured input size " +
                             std::to_string(arch.input_size));
  }
  if (static_cast<int>(info.class_names.size()) != arch.num_classes) {
    throw std::runtime_error("train: dataset has " + std::to_string(info.class_names.size()) +
                             " classes, config expects " + std::to_string(arch.num_classes));
  }
  const SplitManifest manifest = read_split_manifest(dir);
  TrainDatasets data;
  data.class_names = info.class_names;
  const LoadedSplit labeled = load_split(dir, manifest.labeled, info.class_names, true);
  data.labeled_annotations = labeled.annotations;
  data.labeled_images.reserve(labeled.images.size());
  for (const ImageU8& img : labeled.images) data.labeled_images.push_back(image_to_tensor(img));
  const LoadedSplit unlabeled = load_split(dir, manifest.unlabeled, info.class_names, false);
  data.unlabeled_images.reserve(unlabeled.images.size());
  for (const ImageU8& img : unlabeled.images)
    data.unlabeled_images.push_back(image_to_tensor(img));
  const LoadedSplit eval = load_split(dir, manifest.eval_ids, info.class_names, true);
  data.eval_images = eval.images;
  data.eval_annotations = eval.annotations;
  return data;
}

int cmd_train(const TrainArgs& args) {
  LabConfig cfg = args.config.empty() ? LabConfig{} : load_lab_config(args.config);
  if (!args.data.empty()) cfg.data.dir = args.data;
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (!args.mode.empty()) cfg.train.mode = train_mode_from_string(args.mode);
  if (!args.types.empty()) cfg.train.types = isd_types_from_string(args.types);
  if (args.alpha >= 0.0) cfg.train.alpha = args.alpha;
  if (args.gamma1 >= 0.0) cfg.train.gamma1 = args.gamma1;
  if (args.gamma2 >= 0.0) cfg.train.gamma2 = args.gamma2;
  if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
  if (args.iterations >= 0) cfg.train.max_iterations = static_cast<std::size_t>(args.iterations);
  cfg.train.validate();
  cfg.arch.validate();
  cfg.eval.validate();

  const TrainDatasets data = load_train_datasets(cfg.data.dir, cfg.arch);
  std::filesystem::create_directories(cfg.out_dir);

  const std::string label =
      compose_run_label(cfg.train.mode, cfg.train.types, cfg.train.alpha);
  std::printf("training %s (seed %llu, %zu steps) on %s -> %s\n", label.c_str(),
              static_cast<unsigned long long>(cfg.train.seed), cfg.train.max_iterations,
              cfg.data.dir.c_str(), cfg.out_dir.c_str());
  std::fflush(stdout);

  TrainOutputs out;
  out.metrics_csv = (std::filesystem::path(cfg.out_dir) / "metrics.csv").string();
  out.eval_csv = (std::filesystem::path(cfg.out_dir) / "eval.csv").string();
  out.checkpoint_dir = (std::filesystem::path(cfg.out_dir) / "checkpoints").string();
  out.on_eval = [&](const EvalRow& row) {
    std::printf("  t=%zu  mAP=%.2f\n", row.t, to_points(row.map));
    std::fflush(stdout);
  };

  const TrainResult result = train(cfg.train, cfg.arch, data, out, cfg.eval);

  nlohmann::json meta;
  meta["label"] = label;
  meta["mode"] = to_string(cfg.train.mode);
  meta["types"] = to_string(cfg.train.types);
  meta["alpha"] = cfg.train.alpha;
  meta["gamma1"] = cfg.train.gamma1;
  meta["gamma2"] = cfg.train.gamma2;
  meta["seed"] = cfg.train.seed;
  meta["iterations"] = cfg.train.max_iterations;
  meta["class_names"] = data.class_names;
  if (result.eval_rows.empty()) {
    meta["final_map"] = nullptr;
  } else {
    meta["final_map"] = result.eval_rows.back().map;
    meta["per_class_ap"] = result.eval_rows.back().per_class_ap;
  }
  write_json_file((std::filesystem::path(cfg.out_dir) / "run.json").string(), meta);

  if (!result.eval_rows.empty())
    std::printf("done: final mAP %.2f\n", to_points(result.eval_rows.back().map));
  else
    std::printf("done (no evaluation rows; eval split empty or eval_every > steps)\n");
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string data;
  std::string split = "eval";
  std::string out;
  double iou = -1.0;
};

int cmd_eval(const EvalArgs& args) {
  LabConfig cfg = args.config.empty() ? LabConfig{} : load_lab_config(args.config);
  if (!args.data.empty()) cfg.data.dir = args.data;
  if (args.iou > 0.0) cfg.eval.match_iou = args.iou;
  cfg.eval.validate();

  // A train checkpoint nests the model under "model"; a plain model
  // checkpoint is the model object itself.
  const nlohmann::json ckpt = read_json_file(args.checkpoint);
  const ToyDetector model =
      model_from_json(ckpt.contains("model") ? ckpt.at("model") : ckpt);

  const DatasetInfo info = read_dataset_info(cfg.data.dir);
  const SplitManifest manifest = read_split_manifest(cfg.data.dir);
  const std::vector<std::string>* ids = nullptr;
  if (args.split == "eval") ids = &manifest.eval_ids;
  else if (args.split == "labeled") ids = &manifest.labeled;
  else if (args.split == "unlabeled") ids = &manifest.unlabeled;
  else throw std::runtime_error("eval: unknown split \"" + args.split + "\"");
  if (static_cast<int>(info.class_names.size()) != model.arch().num_classes)
    throw std::runtime_error("eval: dataset has " + std::to_string(info.class_names.size()) +
                             " classes, checkpoint expects " +
                             std::to_string(model.arch().num_classes));

  const LoadedSplit split = load_split(cfg.data.dir, *ids, info.class_names, true);
  if (split.images.empty()) throw std::runtime_error("eval: split \"" + args.split + "\" is empty");
  const ApResult ap = evaluate_model(model, split.images, split.annotations, cfg.eval);

  for (std::size_t c = 0; c < ap.per_class_ap.size(); ++c) {
    const std::string name =
        c < info.class_names.size() ? info.class_names[c] : "class_" + std::to_string(c + 1);
    if (ap.class_in_gt[c])
      std::printf("AP %-10s %6.2f\n", name.c_str(), to_points(ap.per_class_ap[c]));
    else
      std::printf("AP %-10s      - (absent from ground truth)\n", name.c_str());
  }
  std::printf("mAP %-9s %6.2f  (%zu images, match IoU %.2f)\n", "", to_points(ap.map),
              split.images.size(), cfg.eval.match_iou);

  if (!args.out.empty()) {
    nlohmann::json j;
    j["checkpoint"] = args.checkpoint;
    j["data"] = cfg.data.dir;
    j["split"] = args.split;
    j["n_images"] = split.images.size();
    j["match_iou"] = cfg.eval.match_iou;
    j["score_threshold"] = cfg.eval.score_threshold;
    j["nms_iou"] = cfg.eval.nms_iou;
    j["max_detections"] = cfg.eval.max_detections;
    j["map"] = ap.map;
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < ap.per_class_ap.size(); ++c) {
      const std::string name =
          c < info.class_names.size() ? info.class_names[c] : "class_" + std::to_string(c + 1);
      per_class[name] =
          ap.class_in_gt[c] ? nlohmann::json(ap.per_class_ap[c]) : nlohmann::json();
    }
    j["per_class_ap"] = per_class;
    write_json_file(args.out, j);
    std::printf("wrote %s\n", args.out.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out = "report";
  std::string baseline = "supervised";
};

int cmd_report(const ReportArgs& args) {
  std::vector<RunRecord> runs;
  runs.reserve(args.runs.size());
  for (const std::string& path : args.runs) runs.push_back(load_run(path));
  const std::vector<GroupStats> groups = write_report(runs, args.out, args.baseline);
  std::fputs(report_markdown(groups, args.baseline).c_str(), stdout);
  std::printf("\nwrote %s/report.md, report.json and plots\n", args.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixdet: interpolation-consistency detection lab"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* cgen = app.add_subcommand("generate", "render the synthetic shapes dataset");
  cgen->add_option("--config", gen.config, "TOML config file");
  cgen->add_option("--out", gen.out, "output dataset directory (overrides config)");
  cgen->add_option("--n-labeled", gen.n_labeled, "labeled image count");
  cgen->add_option("--n-unlabeled", gen.n_unlabeled, "unlabeled image count");
  cgen->add_option("--n-eval", gen.n_eval, "held-out eval image count");
  cgen->add_option("--seed", gen.seed, "dataset seed");
  cgen->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  TrainArgs tr;
  CLI::App* ctrain = app.add_subcommand("train", "train a detector and log metrics");
  ctrain->add_option("--config", tr.config, "TOML config file");
  ctrain->add_option("--data", tr.data, "dataset directory (overrides config)");
  ctrain->add_option("--out", tr.out, "run output directory (overrides config)");
  ctrain->add_option("--mode", tr.mode, "supervised | csd | isd | csd+isd");
  ctrain->add_option("--types", tr.types, "type1 | type2 | both");
  ctrain->add_option("--alpha", tr.alpha, "Beta(alpha, alpha) mix concentration");
  ctrain->add_option("--gamma1", tr.gamma1, "Type-I term weight");
  ctrain->add_option("--gamma2", tr.gamma2, "Type-II term weight");
  ctrain->add_option("--seed", tr.seed, "training seed");
  ctrain->add_option("--iterations", tr.iterations, "number of SGD steps");

  EvalArgs ev;
  CLI::App* ceval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  ceval->add_option("--config", ev.config, "TOML config file");
  ceval->add_option("--checkpoint", ev.checkpoint, "model or train checkpoint JSON")
      ->required();
  ceval->add_option("--data", ev.data, "dataset directory (overrides config)");
  ceval->add_option("--split", ev.split, "eval | labeled | unlabeled");
  ceval->add_option("--iou", ev.iou, "detection-to-GT match IoU threshold");
  ceval->add_option("--out", ev.out, "write a JSON report here");

  ReportArgs rep;
  CLI::App* creport = app.add_subcommand("report", "compare runs: table + curve plots");
  creport->add_option("runs", rep.runs, "run directories or metrics.csv paths")
      ->required()
      ->expected(-1);
  creport->add_option("--out", rep.out, "report output directory");
  creport->add_option("--baseline", rep.baseline, "group label used as the delta baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cgen->parsed()) return cmd_generate(gen);
    if (ctrain->parsed()) return cmd_train(tr);
    if (ceval->parsed()) return cmd_eval(ev);
    if (creport->parsed()) return cmd_report(rep);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
