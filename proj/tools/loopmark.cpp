/*
 * Copyright 2026 The Loopmark Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// loopmark: command-line driver for the annotation loop.
//
// Exit codes: 0 ok, 2 user error, 3 adapter failure, 4 corrupt workspace.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/metrics.hpp"
#include "loopmark/orchestrator.hpp"
#include "loopmark/review_service.hpp"
#include "loopmark/simulation.hpp"
#include "loopmark/workspace.hpp"

namespace fs = std::filesystem;
using namespace loopmark;

namespace {

struct Globals {
  std::string workspace = ".";
  std::string config;
  std::optional<std::uint64_t> seed;
};

// Files as given; directories expand to their PNGs.
std::vector<fs::path> ExpandImages(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      const auto files = list_files(a, ".png");
      out.insert(out.end(), files.begin(), files.end());
    } else if (fs::exists(a)) {
      out.emplace_back(a);
    } else {
      throw UserError("no such file: " + a);
    }
  }
  return out;
}

LoopConfig LoadConfig(const Globals& g) {
  fs::path path = g.config;
  if (path.empty()) {
    path = fs::path(g.workspace) / "config.json";
    if (!fs::exists(path)) {
      throw UserError("no --config given and " + path.string() + " missing");
    }
  }
  LoopConfig cfg = read_loop_config(path);
  if (g.seed) cfg.apply_seed(*g.seed);
  return cfg;
}

void PrintStep(const StepResult& r) {
  const char* status = r.status == StepStatus::kAdvanced        ? "advanced"
                       : r.status == StepStatus::kReviewPending ? "review pending"
                                                                : "complete";
  std::cout << "iteration " << r.iteration << " phase " << to_string(r.phase)
            << " [" << status << "] " << r.message << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("loopmark"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"Model-assisted annotation loop"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--workspace,-w", g.workspace, "Workspace directory")
      ->capture_default_str();
  app.add_option("--config,-c", g.config, "LoopConfig JSON file");
  app.add_option("--seed", g.seed, "Overrides augmentation and mock seeds");
  bool quiet = false;
  app.add_flag("--quiet,-q", quiet, "Only log warnings");

  std::vector<std::string> classes;
  std::string classes_file;
  auto* init = app.add_subcommand("init", "Create an empty workspace");
  init->add_option("--classes", classes_file, "classes.txt to use");
  init->add_option("--class", classes, "Class name (repeatable)");

  std::string pool_name = "train", labels_dir;
  std::vector<std::string> inputs;
  auto* import = app.add_subcommand("import", "Copy images into a pool");
  import->add_option("--pool", pool_name, "train, val or unlabeled")
      ->capture_default_str();
  import->add_option("--labels", labels_dir, "Directory of label files");
  import->add_option("paths", inputs, "PNG files or directories");

  std::string tag;
  auto* seed = app.add_subcommand("seed", "Register the manually labeled seed set");
  seed->add_option("--labels", labels_dir, "Directory of label files")->required();
  seed->add_option("--tag", tag, "Tag for the iteration records");
  seed->add_option("paths", inputs, "PNG files or directories")->required();

  auto* step = app.add_subcommand("step", "Advance the loop by one phase");

  int cycles = 1;
  auto* run = app.add_subcommand("run", "Step through whole iterations");
  run->add_option("--cycles", cycles, "Iterations to run (0: until done)")
      ->capture_default_str();

  auto* exp = app.add_subcommand("export-review", "Write the review bundle");
  auto* merge = app.add_subcommand("merge", "Merge the reviewed bundle");

  std::string csv_out;
  auto* report = app.add_subcommand("report", "Per-iteration results");
  report->add_option("--csv", csv_out, "Also write the CSV here");

  auto* verify = app.add_subcommand("verify", "Check files against the manifest");

  std::string spec_file;
  auto* augment = app.add_subcommand("augment", "Regenerate augmented copies");
  augment->add_option("--spec", spec_file, "AugmentationSpec JSON")->required();

  std::string scenario, out_dir;
  int seeds = 5;
  bool no_baseline = false;
  auto* simulate = app.add_subcommand("simulate", "Run the simulated loop");
  simulate->add_option("--scenario", scenario, "Scenario directory")->required();
  simulate->add_option("--seeds", seeds, "Number of seeds")->capture_default_str();
  simulate->add_option("--out", out_dir, "Output directory (default <scenario>/runs)");
  simulate->add_flag("--no-baseline", no_baseline, "Skip the all-manual baseline");

  ScenarioSpec sspec;
  auto* make_scenario = app.add_subcommand("make-scenario", "Generate a synthetic scenario");
  make_scenario->add_option("--out", out_dir, "Scenario directory")->required();
  make_scenario->add_option("--seed-images", sspec.seed_images)->capture_default_str();
  make_scenario->add_option("--pool-images", sspec.pool_images)->capture_default_str();
  make_scenario->add_option("--val-images", sspec.val_images)->capture_default_str();
  make_scenario->add_option("--size", sspec.width, "Image width and height")
      ->capture_default_str();

  std::string dataset, weights, images_dir, predictions_dir;
  MockDetectorModel mock;
  auto* mock_train_cmd = app.add_subcommand("mock-train", "Mock detector training");
  mock_train_cmd->add_option("--dataset", dataset)->required();
  mock_train_cmd->add_option("--weights-out", weights)->required();
  mock_train_cmd->add_option("--center-jitter", mock.center_jitter)->capture_default_str();
  mock_train_cmd->add_option("--size-jitter", mock.size_jitter)->capture_default_str();
  mock_train_cmd->add_option("--miss-rate", mock.miss_rate)->capture_default_str();
  mock_train_cmd->add_option("--spurious-rate", mock.spurious_rate)->capture_default_str();
  mock_train_cmd->add_option("--reference-size", mock.reference_size)->capture_default_str();

  auto* mock_detect_cmd = app.add_subcommand("mock-detect", "Mock detector inference");
  mock_detect_cmd->add_option("--scenario", scenario)->required();
  mock_detect_cmd->add_option("--weights", weights)->required();
  mock_detect_cmd->add_option("--images", images_dir)->required();
  mock_detect_cmd->add_option("--predictions", predictions_dir)->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  auto* serve = app.add_subcommand("review-serve", "Serve the review API");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--static", static_dir, "Built review UI to host at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*init) {
      LabelMap map = classes_file.empty() ? LabelMap(classes)
                                          : read_label_map(classes_file);
      Workspace ws = Workspace::init(g.workspace, map);
      if (!g.config.empty()) {
        read_loop_config(g.config);  // validate before copying
        fs::copy_file(g.config, ws.root() / "config.json");
      }
      std::cout << "initialised " << ws.root().string() << " with " << map.size()
                << " classes\n";
    } else if (*import) {
      Workspace ws = Workspace::open(g.workspace);
      std::optional<fs::path> labels;
      if (!labels_dir.empty()) labels = labels_dir;
      const auto paths = ExpandImages(inputs);
      const ImportResult r =
          ws.import_images(paths, pool_from_string(pool_name), labels);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& d : r.duplicates) std::cerr << "duplicate: " << d << "\n";
      std::cout << "imported " << r.imported.size() << " images into "
                << pool_name << "\n";
    } else if (*seed) {
      Workspace ws = Workspace::open(g.workspace);
      Orchestrator orch(ws, LoadConfig(g));
      orch.seed(ExpandImages(inputs), labels_dir, tag);
      std::cout << "seeded " << ws.manifest().train.size() << " images\n";
    } else if (*step) {
      Workspace ws = Workspace::open(g.workspace);
      Orchestrator orch(ws, LoadConfig(g));
      PrintStep(orch.step());
    } else if (*run) {
      Workspace ws = Workspace::open(g.workspace);
      Orchestrator orch(ws, LoadConfig(g));
      for (const auto& r : orch.run(cycles)) PrintStep(r);
    } else if (*exp) {
      Workspace ws = Workspace::open(g.workspace);
      Orchestrator orch(ws, LoadConfig(g));
      const ExportResult r = orch.export_for_review();
      std::cout << "exported " << r.images << " images (" << r.predictions
                << " boxes, " << r.pre_accepted_items << " pre-accepted) to "
                << ReviewBundle(ws.root(), ws.manifest().loop.iteration)
                       .dir()
                       .string()
                << "\n";
    } else if (*merge) {
      Workspace ws = Workspace::open(g.workspace);
      Orchestrator orch(ws, LoadConfig(g));
      orch.merge_from_bundle();
      std::cout << "merged; train pool now " << ws.manifest().train.size()
                << " images\n";
    } else if (*report) {
      Workspace ws = Workspace::open(g.workspace);
      std::cout << report_table(ws.manifest());
      if (!csv_out.empty()) write_file_atomic(csv_out, report_csv(ws.manifest()));
    } else if (*verify) {
      Workspace ws = Workspace::open(g.workspace);
      const VerifyReport r = ws.verify();
      for (const auto& p : r.problems) std::cout << p << "\n";
      if (!r.ok()) {
        std::cout << r.problems.size() << " problem(s)\n";
        return 4;
      }
      std::cout << "ok: " << ws.manifest().images.size() << " images\n";
    } else if (*augment) {
      Workspace ws = Workspace::open(g.workspace);
      AugmentationSpec spec = augmentation_spec_from_json(read_file(spec_file));
      if (g.seed) spec.seed = *g.seed;
      const AugmentResult r = ws.augment_split(spec);
      std::cout << r.originals << " originals, " << r.augmented << " augmented, "
                << r.originals + r.augmented << " total\n";
    } else if (*simulate) {
      SimulationOptions opts;
      opts.scenario_dir = scenario;
      opts.out_dir = out_dir.empty() ? fs::path(scenario) / "runs" : fs::path(out_dir);
      opts.seeds = seeds;
      opts.baseline = !no_baseline;
      if (!g.config.empty()) {
        // Detector and review sources are filled in from the scenario.
        opts.config = loop_config_from_json(read_file(g.config));
      } else {
        opts.config.detector.scenario_dir = scenario;
      }
      const SimulationResult r = run_simulation(opts);
      std::cout << r.summary_csv;
    } else if (*make_scenario) {
      sspec.height = sspec.width;
      if (g.seed) sspec.seed = *g.seed;
      generate_scenario(out_dir, sspec);
      std::cout << "scenario written to " << out_dir << "\n";
    } else if (*mock_train_cmd) {
      if (g.seed) mock.seed = *g.seed;
      MockDetector det(mock, {});
      det.train({dataset, weights, std::nullopt, 0});
    } else if (*mock_detect_cmd) {
      MockDetector det(MockDetectorModel{}, scenario);
      std::cout << det.detect({weights, images_dir, predictions_dir, 0})
                << " prediction files\n";
    } else if (*serve) {
      std::optional<LoopConfig> cfg;
      if (!g.config.empty() || fs::exists(fs::path(g.workspace) / "config.json")) {
        cfg = LoadConfig(g);
      }
      ReviewService service(g.workspace, cfg ? cfg->costs : AnnotatorCostModel{},
                            cfg ? cfg->fixed_clock : std::string());
      if (!static_dir.empty()) service.set_static_dir(static_dir);
      std::cout << "serving review API on http://" << host << ":" << port << "\n";
      service.listen(host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (const auto* a = dynamic_cast<const AdapterError*>(&e)) {
      if (!a->output().empty()) std::cerr << a->output() << "\n";
    }
    return exit_code(e);
  }
  return 0;
}
