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


#include "loopmark/workspace.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/orchestrator.hpp"
#include "loopmark/raster.hpp"
#include "test_support.hpp"

namespace loopmark {
namespace {

namespace fs = std::filesystem;
using testing::RandomGridBox;
using testing::TempDir;

const LabelMap kClasses({"ballast", "plant"});

// Writes n distinct small PNGs (and labels when labels_dir is given).
std::vector<fs::path> MakeImages(const fs::path& dir, int n, int offset = 0,
                                 const fs::path* labels_dir = nullptr,
                                 int size = 12) {
  fs::create_directories(dir);
  if (labels_dir) fs::create_directories(*labels_dir);
  std::vector<fs::path> out;
  for (int i = 0; i < n; ++i) {
    const int k = i + offset;
    Raster r(size, size, {static_cast<std::uint8_t>(k & 255),
                          static_cast<std::uint8_t>(k >> 8), 7});
    r.fill_rect(2, 2, size / 2, size / 2, {255, 255, 255});
    char name[32];
    std::snprintf(name, sizeof name, "img_%04d", k);
    out.push_back(dir / (std::string(name) + ".png"));
    write_png(out.back(), r);
    if (labels_dir) {
      const BoundingBox b{k % 2, 0.3, 0.3, 0.3, 0.3};
      write_labels(*labels_dir / (std::string(name) + ".txt"),
                   std::vector<BoundingBox>{b});
    }
  }
  return out;
}

int RunCli(const std::string& args, const std::string& fault = "") {
  std::string cmd;
  if (!fault.empty()) cmd += "LOOPMARK_FAULT=" + fault + " ";
  cmd += std::string("'") + LOOPMARK_CLI + "' --quiet " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Workspace, InitWritesLayoutAndEmptyManifest) {
  TempDir tmp;
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  for (const char* d : {"images", "labels", "predictions", "runs"}) {
    EXPECT_TRUE(fs::is_directory(tmp / "ws" / d)) << d;
  }
  EXPECT_EQ(read_label_map(tmp / "ws/classes.txt"), kClasses);
  EXPECT_TRUE(ws.manifest().images.empty());
  EXPECT_EQ(ws.manifest().loop.phase, Phase::kEmpty);
  EXPECT_TRUE(ws.verify().ok());
}

TEST(Workspace, InitRefusesNonEmptyDirectory) {
  TempDir tmp;
  fs::create_directories(tmp / "ws");
  write_file_atomic(tmp / "ws/stray.txt", "x");
  EXPECT_THROW(Workspace::init(tmp / "ws", kClasses), UserError);
  EXPECT_THROW(Workspace::init(tmp / "ws2", LabelMap{}), UserError);
}

TEST(Workspace, OpenWithoutManifestIsCorrupt) {
  TempDir tmp;
  fs::create_directories(tmp / "ws");
  EXPECT_THROW(Workspace::open(tmp / "ws"), CorruptWorkspace);
  EXPECT_THROW(Workspace::open(tmp / "missing"), UserError);
}

TEST(Import, LabeledImagesBecomeManualTrainEntries) {
  TempDir tmp;
  const fs::path labels = tmp / "in/labels";
  auto paths = MakeImages(tmp / "in/images", 3, 0, &labels);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  ImportResult r = ws.import_images(paths, Pool::kTrain, labels);
  ASSERT_EQ(r.imported.size(), 3u);
  const Manifest& m = ws.manifest();
  EXPECT_EQ(m.train.size(), 3u);
  for (const auto& id : r.imported) {
    const ImageEntry& e = m.images.at(id);
    EXPECT_EQ(e.origin, Origin::kManual);
    EXPECT_EQ(e.path, "images/" + id + ".png");
    EXPECT_EQ(e.dims, (ImageDims{12, 12}));
    EXPECT_EQ(id, content_id(read_bytes(ws.image_path(id))));
    EXPECT_EQ(ws.labels(id).size(), 1u);
  }
  EXPECT_TRUE(ws.verify().ok());
}

TEST(Import, DuplicatesAreReportedAndSkipped) {
  TempDir tmp;
  auto paths = MakeImages(tmp / "a", 2);
  auto again = MakeImages(tmp / "b", 2);  // same pixels, same bytes
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  ws.import_images(paths, Pool::kUnlabeled);
  ImportResult r = ws.import_images(again, Pool::kUnlabeled);
  EXPECT_TRUE(r.imported.empty());
  EXPECT_EQ(r.duplicates.size(), 2u);
  EXPECT_EQ(ws.manifest().unlabeled.size(), 2u);
}

TEST(Import, EmptyInputWarnsAndChangesNothing) {
  TempDir tmp;
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  const std::string before = read_file(tmp / "ws/manifest.json");
  ImportResult r = ws.import_images({}, Pool::kTrain);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_EQ(read_file(tmp / "ws/manifest.json"), before);
}

TEST(Import, PoolAndLabelRulesAreEnforced) {
  TempDir tmp;
  const fs::path labels = tmp / "labels";
  auto paths = MakeImages(tmp / "images", 2, 0, &labels);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  EXPECT_THROW(ws.import_images(paths, Pool::kUnlabeled, labels), UserError);
  EXPECT_THROW(ws.import_images(paths, Pool::kVal), UserError);
  fs::remove(labels / "img_0001.txt");
  EXPECT_THROW(ws.import_images(paths, Pool::kVal, labels), UserError);
  // Train without a label file is allowed and stays pending.
  ImportResult r = ws.import_images(paths, Pool::kTrain, labels);
  EXPECT_EQ(r.warnings.size(), 1u);
  int pending = 0;
  for (const auto& [id, e] : ws.manifest().images) {
    pending += e.origin == Origin::kManualPending;
  }
  EXPECT_EQ(pending, 1);
}

TEST(Import, UndecodableFileFailsWithoutPartialWrites) {
  TempDir tmp;
  auto paths = MakeImages(tmp / "images", 2);
  write_file_atomic(tmp / "images/broken.png", "not a png");
  paths.push_back(tmp / "images/broken.png");
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  const std::string before = read_file(tmp / "ws/manifest.json");
  EXPECT_THROW(ws.import_images(paths, Pool::kUnlabeled), UserError);
  EXPECT_EQ(read_file(tmp / "ws/manifest.json"), before);
  EXPECT_TRUE(list_files(tmp / "ws/images", ".png").empty());
  EXPECT_FALSE(fs::exists(tmp / "ws/staging"));
}

TEST(Import, InvalidClassInLabelsIsRejected) {
  TempDir tmp;
  auto paths = MakeImages(tmp / "images", 1);
  fs::create_directories(tmp / "labels");
  write_file_atomic(tmp / "labels/img_0000.txt", "5 0.5 0.5 0.1 0.1\n");
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  EXPECT_THROW(ws.import_images(paths, Pool::kTrain, tmp / "labels"), UserError);
  EXPECT_TRUE(ws.manifest().images.empty());
}

TEST(Merge, MovesReviewedImagesIntoTrain) {
  TempDir tmp;
  auto paths = MakeImages(tmp / "images", 3);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  auto ids = ws.import_images(paths, Pool::kUnlabeled).imported;
  std::map<std::string, std::vector<BoundingBox>> corrected{
      {ids[0], {{1, 0.5, 0.5, 0.2, 0.2}}}, {ids[1], {}}};
  LaborSummary labor;
  labor.images = 2;
  labor.total = 3.5;
  ws.merge_reviewed(1, corrected, labor);
  const Manifest& m = ws.manifest();
  EXPECT_EQ(m.train.size(), 2u);
  EXPECT_EQ(m.unlabeled, std::vector<std::string>{ids[2]});
  EXPECT_EQ(m.images.at(ids[0]).origin, Origin::kAssisted);
  EXPECT_EQ(m.images.at(ids[0]).source_iteration, 1);
  EXPECT_EQ(ws.labels(ids[0]), corrected[ids[0]]);
  EXPECT_TRUE(ws.labels(ids[1]).empty());
  EXPECT_DOUBLE_EQ(m.loop.batch_labor.total, 3.5);
  EXPECT_TRUE(ws.verify().ok());
}

TEST(Merge, RejectsUnknownIdsAndBadClassesAtomically) {
  TempDir tmp;
  auto paths = MakeImages(tmp / "images", 2);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  auto ids = ws.import_images(paths, Pool::kUnlabeled).imported;
  const std::string before = read_file(tmp / "ws/manifest.json");
  EXPECT_THROW(ws.merge_reviewed(1, {{ids[0], {}}, {"feedfacefeedface", {}}}),
               UserError);
  EXPECT_THROW(ws.merge_reviewed(1, {{ids[0], {}}, {ids[1], {{9, 0.5, 0.5, 0.1, 0.1}}}}),
               UserError);
  EXPECT_EQ(read_file(tmp / "ws/manifest.json"), before);
  EXPECT_TRUE(list_files(tmp / "ws/labels", ".txt").empty());
}

TEST(Augment, CopiesAreDerivedFromTrainOriginals) {
  TempDir tmp;
  const fs::path labels = tmp / "labels";
  auto paths = MakeImages(tmp / "images", 4, 0, &labels, 32);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  ws.import_images(paths, Pool::kTrain, labels);
  AugmentationSpec spec;
  spec.seed = 3;
  spec.copies_per_image = 2;
  AugmentResult r = ws.augment_split(spec);
  EXPECT_EQ(r.originals, 4);
  EXPECT_EQ(r.augmented, 8);
  const Manifest& m = ws.manifest();
  EXPECT_EQ(m.train_augmented_count(), 8);
  EXPECT_EQ(m.train_originals().size(), 4u);
  EXPECT_EQ(m.loop.train_augmented, 8);
  for (const auto& id : m.train) {
    const ImageEntry& e = m.images.at(id);
    if (e.origin != Origin::kAugmented) continue;
    EXPECT_EQ(id, e.parent + "__aug" + std::to_string(e.copy_index));
    EXPECT_TRUE(fs::exists(ws.image_path(id)));
    EXPECT_TRUE(fs::exists(ws.label_path(id)));
  }
  // A second pass replaces rather than accumulates.
  spec.copies_per_image = 1;
  ws.augment_split(spec);
  EXPECT_EQ(ws.manifest().train_augmented_count(), 4);
  EXPECT_EQ(list_files(tmp / "ws/images", ".png").size(), 8u);
  EXPECT_TRUE(ws.verify().ok());
}

TEST(Augment, SameSeedGivesIdenticalBytes) {
  TempDir tmp;
  const fs::path labels = tmp / "labels";
  auto paths = MakeImages(tmp / "images", 2, 0, &labels, 32);
  AugmentationSpec spec;
  spec.seed = 11;
  std::vector<std::string> digests;
  for (const char* name : {"w1", "w2"}) {
    Workspace ws = Workspace::init(tmp / name, kClasses);
    ws.import_images(paths, Pool::kTrain, labels);
    ws.augment_split(spec);
    std::string all;
    for (const auto& id : ws.manifest().train) {
      all += sha256_hex(read_file(ws.image_path(id)));
      all += read_file(ws.label_path(id));
    }
    digests.push_back(sha256_hex(all));
    EXPECT_EQ(read_file(tmp / name / "manifest.json"),
              read_file(tmp / "w1/manifest.json"));
  }
  EXPECT_EQ(digests[0], digests[1]);
}

TEST(Augment, RequiresLabeledOriginals) {
  TempDir tmp;
  auto paths = MakeImages(tmp / "images", 2);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  EXPECT_THROW(ws.augment_split(AugmentationSpec{}), UserError);
  fs::create_directories(tmp / "nolabels");
  ws.import_images(paths, Pool::kTrain, tmp / "nolabels");
  EXPECT_THROW(ws.augment_split(AugmentationSpec{}), UserError);
}

class Table2 : public ::testing::TestWithParam<std::string> {};

TEST_P(Table2, AugmentedTotalsMatchFixture) {
  const auto fixture = nlohmann::json::parse(
      read_file(fs::path(LOOPMARK_SOURCE_DIR) / "configs/table2" / (GetParam() + ".json")));
  const int originals = fixture.at("originals");
  const AugmentationSpec spec =
      augmentation_spec_from_json(fixture.at("augmentation").dump());
  TempDir tmp;
  const fs::path labels = tmp / "labels";
  auto paths = MakeImages(tmp / "images", originals, 0, &labels, 8);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  ws.import_images(paths, Pool::kTrain, labels);
  AugmentResult r = ws.augment_split(spec);
  EXPECT_EQ(r.originals, originals);
  const Manifest& m = ws.manifest();
  EXPECT_EQ(static_cast<int>(m.train.size()), fixture.at("expected_total").get<int>());
  EXPECT_EQ(m.loop.train_original + m.loop.train_augmented,
            fixture.at("expected_total").get<int>());
  EXPECT_EQ(static_cast<int>(list_files(tmp / "ws/images", ".png").size()),
            fixture.at("expected_total").get<int>());
}

INSTANTIATE_TEST_SUITE_P(Configs, Table2, ::testing::Values("A", "B", "C", "D"));

// Random manifests that satisfy every invariant.
Manifest RandomManifest(Rng& rng) {
  Manifest m;
  m.label_map = kClasses;
  auto hex_id = [&] {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < 16; ++i) s += digits[rng.uniform_int(0, 15)];
    return s;
  };
  auto add = [&](Pool pool, Origin origin) {
    const std::string id = hex_id();
    ImageEntry e;
    e.path = "images/" + id + ".png";
    e.dims = {rng.uniform_int(1, 4000), rng.uniform_int(1, 4000)};
    e.origin = origin;
    e.source_iteration = rng.uniform_int(0, 5);
    e.source_name = "f" + std::to_string(rng.uniform_int(0, 9999)) + ".png";
    m.images.emplace(id, e);
    m.pool(pool).push_back(id);
    return id;
  };
  std::vector<std::string> originals;
  for (int i = rng.uniform_int(0, 8); i > 0; --i) {
    const Origin o = rng.uniform() < 0.5 ? Origin::kManual : Origin::kAssisted;
    originals.push_back(add(Pool::kTrain, o));
  }
  for (const auto& parent : originals) {
    for (int k = rng.uniform_int(0, 2) - 1; k >= 0; --k) {
      const std::string id = parent + "__aug" + std::to_string(k);
      ImageEntry e = m.images.at(parent);
      e.path = "images/" + id + ".png";
      e.origin = Origin::kAugmented;
      e.parent = parent;
      e.copy_index = k;
      m.images.emplace(id, e);
      m.train.push_back(id);
    }
  }
  for (int i = rng.uniform_int(0, 4); i > 0; --i) add(Pool::kVal, Origin::kManual);
  for (int i = rng.uniform_int(0, 6); i > 0; --i) add(Pool::kUnlabeled, Origin::kUnlabeled);
  for (Pool p : {Pool::kTrain, Pool::kVal, Pool::kUnlabeled}) {
    std::sort(m.pool(p).begin(), m.pool(p).end());
  }
  auto labor = [&] {
    LaborSummary l;
    l.images = rng.uniform_int(0, 100);
    l.boxes = rng.uniform_int(0, 300);
    l.total = rng.uniform(0, 1000);
    l.manual_equivalent = rng.uniform(0, 1000);
    l.edits = {rng.uniform_int(0, 9), rng.uniform_int(0, 9), rng.uniform_int(0, 9),
               rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
    return l;
  };
  for (int i = 1, n = rng.uniform_int(0, 4); i <= n; ++i) {
    IterationRecord r;
    r.index = i;
    r.tag = rng.uniform() < 0.2 ? "baseline" : "";
    r.train_size_original = rng.uniform_int(0, 500);
    r.train_size_augmented = rng.uniform_int(0, 500);
    r.train_size_total = r.train_size_original + r.train_size_augmented;
    if (rng.uniform() < 0.8) {
      r.eval = EvalSummary{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(),
                           rng.uniform_int(0, 100)};
    }
    r.labor = labor();
    r.detector_run_id = "iter" + std::to_string(i) + "-" + hex_id().substr(0, 12);
    r.started_at = "2026-01-0" + std::to_string(i) + "T00:00:00Z";
    r.finished_at = r.started_at;
    m.iterations.push_back(r);
  }
  m.loop.phase = static_cast<Phase>(rng.uniform_int(0, 7));
  m.loop.iteration = static_cast<int>(m.iterations.size());
  if (!m.unlabeled.empty() && rng.uniform() < 0.5) m.loop.pending_batch = {m.unlabeled[0]};
  m.loop.weights = rng.uniform() < 0.5 ? "runs/iter_1/best.weights" : "";
  m.loop.train_original = static_cast<int>(originals.size());
  m.loop.train_augmented = m.train_augmented_count();
  m.loop.train_labor = labor();
  m.loop.batch_labor = labor();
  m.loop.complete = rng.uniform() < 0.3;
  m.loop.tag = m.loop.complete ? "baseline" : "";
  return m;
}

TEST(ManifestJson, RoundTripIsIdentityOnRandomManifests) {
  for (int i = 0; i < 300; ++i) {
    Rng rng(stream_key(99, "manifest", "", static_cast<std::uint64_t>(i)));
    const Manifest m = RandomManifest(rng);
    ASSERT_NO_THROW(m.validate()) << i;
    const std::string text = manifest_to_json(m);
    const Manifest back = manifest_from_json(text);
    ASSERT_EQ(back, m) << i;
    ASSERT_EQ(manifest_to_json(back), text) << i;
  }
}

TEST(ManifestJson, MalformedInputIsCorrupt) {
  EXPECT_THROW(manifest_from_json("{"), CorruptWorkspace);
  EXPECT_THROW(manifest_from_json("[]"), CorruptWorkspace);
  EXPECT_THROW(manifest_from_json(R"({"schema_version": 1})"), CorruptWorkspace);
}

TEST(ManifestValidate, CatchesBrokenInvariants) {
  Rng rng(stream_key(5, "manifest", "", 0));
  Manifest m;
  do {
    m = RandomManifest(rng);
  } while (m.train.size() < 2 || m.unlabeled.empty());
  {
    Manifest bad = m;
    std::swap(bad.train[0], bad.train[1]);
    EXPECT_THROW(bad.validate(), CorruptWorkspace);
  }
  {
    Manifest bad = m;
    bad.train.push_back(bad.unlabeled[0]);
    std::sort(bad.train.begin(), bad.train.end());
    EXPECT_THROW(bad.validate(), CorruptWorkspace);
  }
  {
    Manifest bad = m;
    bad.images.at(bad.unlabeled[0]).origin = Origin::kManual;
    EXPECT_THROW(bad.validate(), CorruptWorkspace);
  }
  {
    Manifest bad = m;
    bad.images.at(bad.train[0]).path = "images/elsewhere.png";
    EXPECT_THROW(bad.validate(), CorruptWorkspace);
  }
  {
    Manifest bad = m;
    IterationRecord r;
    r.index = static_cast<int>(bad.iterations.size()) + 2;
    bad.iterations.push_back(r);
    EXPECT_THROW(bad.validate(), CorruptWorkspace);
  }
}

TEST(Verify, ReportsMissingAndStrayFiles) {
  TempDir tmp;
  const fs::path labels = tmp / "labels";
  auto paths = MakeImages(tmp / "images", 2, 0, &labels);
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  auto ids = ws.import_images(paths, Pool::kTrain, labels).imported;
  fs::remove(ws.label_path(ids[0]));
  write_file_atomic(tmp / "ws/images/stray.png", "x");
  VerifyReport r = ws.verify();
  EXPECT_EQ(r.problems.size(), 2u);
}

TEST(Lock, IsReentrantWithinOneWorkspace) {
  TempDir tmp;
  Workspace ws = Workspace::init(tmp / "ws", kClasses);
  auto outer = ws.lock();
  auto inner = ws.lock();
  auto paths = MakeImages(tmp / "images", 1);
  EXPECT_NO_THROW(ws.import_images(paths, Pool::kUnlabeled));
}

// A process killed at each commit stage leaves a workspace that the next
// writer either rolls forward or discards, never half-applied.
class CrashDuringImport : public ::testing::TestWithParam<const char*> {};

TEST_P(CrashDuringImport, RecoveryYieldsAConsistentWorkspace) {
  TempDir tmp;
  const fs::path labels = tmp / "labels";
  MakeImages(tmp / "images", 4, 0, &labels);
  ASSERT_EQ(RunCli("-w '" + (tmp / "ws").string() + "' init --class a --class b"), 0);
  const std::string before = read_file(tmp / "ws/manifest.json");
  const std::string args = "-w '" + (tmp / "ws").string() + "' import --labels '" +
                           labels.string() + "' '" + (tmp / "images").string() + "'";
  ASSERT_EQ(RunCli(args, GetParam()), 86);
  ASSERT_TRUE(fs::exists(tmp / "ws/staging"));

  Workspace ws = Workspace::open(tmp / "ws");
  { auto guard = ws.lock(); }
  EXPECT_FALSE(fs::exists(tmp / "ws/staging"));
  EXPECT_TRUE(ws.verify().ok());
  const bool rolled_forward = std::string(GetParam()) == "tx:committed";
  EXPECT_EQ(ws.manifest().train.size(), rolled_forward ? 4u : 0u);
  if (!rolled_forward) {
    EXPECT_EQ(read_file(tmp / "ws/manifest.json"), before);
  }

  // Re-running the import lands on the same bytes as a clean import.
  ASSERT_EQ(RunCli(args), 0);
  ASSERT_EQ(RunCli("-w '" + (tmp / "clean").string() + "' init --class a --class b"), 0);
  ASSERT_EQ(RunCli("-w '" + (tmp / "clean").string() + "' import --labels '" +
                   labels.string() + "' '" + (tmp / "images").string() + "'"),
            0);
  EXPECT_EQ(read_file(tmp / "ws/manifest.json"), read_file(tmp / "clean/manifest.json"));
}

INSTANTIATE_TEST_SUITE_P(Stages, CrashDuringImport,
                         ::testing::Values("tx:staged", "tx:committed"),
                         [](const auto& info) {
                           return std::string(info.param) == "tx:staged" ? "BeforeCommit"
                                                                         : "AfterCommit";
                         });

}  // namespace
}  // namespace loopmark
