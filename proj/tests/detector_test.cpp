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


#include "loopmark/detector.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <set>
#include <thread>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/raster.hpp"
#include "test_support.hpp"

namespace loopmark {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::set<std::string> Tree(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    out.insert(fs::relative(e.path(), root).string());
  }
  return out;
}

// A minimal dataset handoff directory.
fs::path MakeDataset(const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  write_png(dir / "images/a.png", Raster(4, 4));
  write_file_atomic(dir / "labels/a.txt", "0 0.5 0.5 0.2 0.2\n");
  write_dataset_metadata(dir, LabelMap({"ballast", "plant"}));
  return dir;
}

fs::path MakeImagesDir(const fs::path& dir, int n) {
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    write_png(dir / ("im" + std::to_string(i) + ".png"), Raster(4, 4));
  }
  return dir;
}

TEST(Placeholders, ValuesAreSingleQuoted) {
  EXPECT_EQ(substitute_placeholders("train {dataset_dir} -o {weights_out}",
                                    {{"dataset_dir", "/d ir"}, {"weights_out", "w"}}),
            "train '/d ir' -o 'w'");
  EXPECT_EQ(substitute_placeholders("echo {x}", {{"x", "it's"}}),
            "echo 'it'\\''s'");
}

TEST(Placeholders, UnknownNameIsRejected) {
  EXPECT_THROW(substitute_placeholders("run {nope}", {{"x", "1"}}), InvalidArgument);
}

TEST(AdapterConfig, RequiresContractPlaceholders) {
  AdapterConfig cfg;
  cfg.train_command = "t {dataset_dir} {weights_out}";
  cfg.detect_command = "d {weights_in} {images_dir} {predictions_dir}";
  EXPECT_NO_THROW(cfg.validate());
  AdapterConfig bad = cfg;
  bad.train_command = "t {dataset_dir}";
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.detect_command = "d {weights_in} {images_dir}";
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.timeout_s = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(RunProcess, CapturesOutputAndExitCode) {
  ProcessResult r = run_process("echo out; echo err >&2; exit 3", 10);
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.timed_out);
  EXPECT_NE(r.output.find("out"), std::string::npos);
  EXPECT_NE(r.output.find("err"), std::string::npos);
}

TEST(RunProcess, ExtraEnvironmentAndWorkdir) {
  TempDir tmp;
  ProcessResult r = run_process("printf '%s' \"$LOOPMARK_ITER\" > here.txt", 10,
                                tmp.path(), {{"LOOPMARK_ITER", "7"}});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(read_file(tmp / "here.txt"), "7");
}

TEST(RunProcess, TimeoutKillsTheWholeGroup) {
  TempDir tmp;
  // The background child would touch a file after the deadline if it survived.
  const std::string cmd = "(sleep 2; touch '" + (tmp / "late").string() +
                          "') & sleep 30";
  ProcessResult r = run_process(cmd, 0.3);
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(r.seconds, 5.0);
  std::this_thread::sleep_for(std::chrono::milliseconds(2500));
  EXPECT_FALSE(fs::exists(tmp / "late"));
}

TEST(RunTrain, WeightsFileIsTheContract) {
  TempDir tmp;
  const fs::path ds = MakeDataset(tmp / "ds");
  AdapterConfig cfg;
  cfg.train_command = "test -f {dataset_dir}/data.yaml && echo w > {weights_out}";
  cfg.detect_command = "true {weights_in} {images_dir} {predictions_dir}";
  const fs::path w = run_train(cfg, ds, tmp / "out/best.weights", std::nullopt, 1);
  EXPECT_EQ(w, tmp / "out/best.weights");
  EXPECT_EQ(read_file(w), "w\n");
}

TEST(RunTrain, FailureModes) {
  TempDir tmp;
  const fs::path ds = MakeDataset(tmp / "ds");
  AdapterConfig cfg;
  cfg.detect_command = "true {weights_in} {images_dir} {predictions_dir}";

  cfg.train_command = "echo boom; exit 1 {dataset_dir} {weights_out}";
  try {
    run_train(cfg, ds, tmp / "w", std::nullopt, 1);
    FAIL() << "expected TrainFailed";
  } catch (const TrainFailed& e) {
    EXPECT_NE(e.output().find("boom"), std::string::npos);
  }

  cfg.train_command = "true {dataset_dir} {weights_out}";
  EXPECT_THROW(run_train(cfg, ds, tmp / "w", std::nullopt, 1), MissingWeights);

  cfg.train_command = "sleep 30; true {dataset_dir} {weights_out}";
  cfg.timeout_s = 0.3;
  EXPECT_THROW(run_train(cfg, ds, tmp / "w", std::nullopt, 1), AdapterTimeout);

  cfg.timeout_s = 10;
  fs::remove(ds / "classes.txt");
  EXPECT_THROW(run_train(cfg, ds, tmp / "w", std::nullopt, 1), UserError);
}

TEST(RunTrain, WritesNothingOutsideItsOutputs) {
  TempDir tmp;
  const fs::path ds = MakeDataset(tmp / "ds");
  fs::create_directories(tmp / "out");
  write_file_atomic(tmp / "sentinel.txt", "keep");
  const auto before = Tree(tmp.path());
  AdapterConfig cfg;
  cfg.train_command = "echo w > {weights_out}; ls {dataset_dir} >/dev/null";
  cfg.detect_command = "true {weights_in} {images_dir} {predictions_dir}";
  cfg.workdir = (tmp / "ds").string();
  run_train(cfg, ds, tmp / "out/best.weights", std::nullopt, 1);
  auto after = Tree(tmp.path());
  after.erase("out/best.weights");
  EXPECT_EQ(after, before);
  EXPECT_EQ(read_file(tmp / "sentinel.txt"), "keep");
}

TEST(RunDetect, ValidatesEveryPredictionFile) {
  TempDir tmp;
  const fs::path images = MakeImagesDir(tmp / "images", 3);
  write_file_atomic(tmp / "w", "w");
  AdapterConfig cfg;
  cfg.train_command = "true {dataset_dir} {weights_out}";
  cfg.detect_command =
      "for f in {images_dir}/*.png; do b=$(basename \"$f\" .png); "
      "echo '1 0.5 0.5 0.1 0.1 0.9' > {predictions_dir}/$b.txt; done; "
      "test -f {weights_in}";
  EXPECT_EQ(run_detect(cfg, tmp / "w", images, tmp / "preds", 2), 3);

  EXPECT_THROW(run_detect(cfg, tmp / "missing", images, tmp / "preds", 2),
               MissingWeights);

  cfg.detect_command = "true {weights_in} {images_dir} {predictions_dir}";
  fs::remove_all(tmp / "preds");
  try {
    run_detect(cfg, tmp / "w", images, tmp / "preds", 2);
    FAIL() << "expected DetectFailed";
  } catch (const DetectFailed& e) {
    EXPECT_NE(std::string(e.what()).find("im0.txt"), std::string::npos) << e.what();
  }

  cfg.detect_command = "exit 5 {weights_in} {images_dir} {predictions_dir}";
  EXPECT_THROW(run_detect(cfg, tmp / "w", images, tmp / "preds", 2), DetectFailed);

  fs::create_directories(tmp / "empty");
  EXPECT_THROW(run_detect(cfg, tmp / "w", tmp / "empty", tmp / "preds", 2), UserError);
}

TEST(ValidatePredictions, NamesTheMalformedFile) {
  TempDir tmp;
  const fs::path images = MakeImagesDir(tmp / "images", 2);
  fs::create_directories(tmp / "p");
  write_file_atomic(tmp / "p/im0.txt", "0 0.5 0.5 0.1 0.1 0.5\n");
  write_file_atomic(tmp / "p/im1.txt", "0 0.5 0.5 0.1 0.1\n");  // no confidence
  try {
    validate_predictions(images, tmp / "p");
    FAIL() << "expected DetectFailed";
  } catch (const DetectFailed& e) {
    EXPECT_NE(std::string(e.what()).find("im1.txt"), std::string::npos) << e.what();
  }
  write_file_atomic(tmp / "p/im1.txt", "7 0.5 0.5 0.1 0.1 0.5\n");
  EXPECT_EQ(validate_predictions(images, tmp / "p"), 2);
  const LabelMap map({"a", "b"});
  EXPECT_THROW(validate_predictions(images, tmp / "p", &map), DetectFailed);
  write_file_atomic(tmp / "p/im1.txt", "");
  EXPECT_EQ(validate_predictions(images, tmp / "p", &map), 2);
}

}  // namespace
}  // namespace loopmark
