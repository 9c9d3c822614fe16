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

// On-disk dataset workspace.
//
//   root/manifest.json        single source of truth, committed by rename
//   root/classes.txt          label map
//   root/images/<id>.png      originals (id = 16 hex chars of SHA-256)
//   root/images/<id>__aug<k>.png
//   root/labels/<id>.txt      ground truth, paired with images by stem
//   root/predictions/iter_<i>/, root/runs/iter_<i>/, root/review/iter_<i>/
//   root/staging/tx/          in-flight transaction (see Transaction)
//
// Every file change that must agree with the manifest goes through a
// Transaction: files are written under staging/, a new manifest is staged,
// and the rename onto manifest.json is the commit point. Staged files are
// moved into place after the commit; an interrupted transaction is rolled
// forward or discarded the next time the workspace is opened for writing.

#ifndef LOOPMARK_WORKSPACE_HPP_
#define LOOPMARK_WORKSPACE_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopmark/geometry.hpp"
#include "loopmark/labelfmt.hpp"

namespace loopmark {

inline constexpr int kManifestSchemaVersion = 1;

enum class Origin { kManualPending, kManual, kUnlabeled, kAssisted, kAugmented };
enum class Pool { kTrain, kVal, kUnlabeled };

std::string_view to_string(Origin origin);
std::string_view to_string(Pool pool);
Origin origin_from_string(std::string_view s);
Pool pool_from_string(std::string_view s);

/// True for origins that carry a label file.
bool is_labeled(Origin origin);

struct ImageEntry {
  std::string path;  // workspace-relative
  ImageDims dims;
  Origin origin = Origin::kUnlabeled;
  int source_iteration = 0;
  std::string source_name;  // file name the image was imported from
  std::string parent;       // augmented copies only
  int copy_index = -1;      // augmented copies only

  friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

struct EditHistogram {
  int review = 0;
  int adjust = 0;
  int reclass = 0;
  int remove = 0;
  int draw = 0;

  friend bool operator==(const EditHistogram&, const EditHistogram&) = default;
};

/// Annotation effort spent producing one batch of labels, in cost units.
struct LaborSummary {
  int images = 0;
  int boxes = 0;  // boxes in the final labels
  double total = 0.0;
  /// Cost of drawing every final box from scratch.
  double manual_equivalent = 0.0;
  EditHistogram edits;

  double per_image() const { return images > 0 ? total / images : 0.0; }
  LaborSummary& operator+=(const LaborSummary& other);
  friend bool operator==(const LaborSummary&, const LaborSummary&) = default;
};

struct EvalSummary {
  double best_f1 = 0.0;
  double best_f1_confidence = 0.0;
  double map_50 = 0.0;
  double map_90 = 0.0;
  int val_images = 0;

  friend bool operator==(const EvalSummary&, const EvalSummary&) = default;
};

struct IterationRecord {
  int index = 0;
  std::string tag;  // empty, or "baseline"
  int train_size_original = 0;
  int train_size_augmented = 0;
  int train_size_total = 0;
  std::optional<EvalSummary> eval;
  /// Labor that produced the newest originals in this iteration's train set.
  LaborSummary labor;
  std::string detector_run_id;
  std::string started_at;
  std::string finished_at;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

enum class Phase {
  kEmpty,
  kSeeded,
  kAugmented,
  kTrained,
  kDetected,
  kAwaitingReview,
  kMerged,
  kEvaluated,
};

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view s);

/// Orchestrator progress, persisted with the manifest so that a phase change
/// and its file effects commit together.
struct LoopState {
  Phase phase = Phase::kEmpty;
  int iteration = 0;
  std::vector<std::string> pending_batch;
  std::string weights;  // workspace-relative
  std::string detector_run_id;
  int train_original = 0;
  int train_augmented = 0;
  std::string iteration_started_at;
  /// Labor behind the newest originals of the current train set.
  LaborSummary train_labor;
  /// Labor of the batch merged during the current iteration.
  LaborSummary batch_labor;
  /// No unlabeled images remain (or the iteration cap was reached).
  bool complete = false;
  std::string tag;

  friend bool operator==(const LoopState&, const LoopState&) = default;
};

struct Manifest {
  int schema_version = kManifestSchemaVersion;
  LabelMap label_map;
  std::map<std::string, ImageEntry> images;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> unlabeled;
  std::vector<IterationRecord> iterations;
  LoopState loop;

  std::vector<std::string>& pool(Pool p);
  const std::vector<std::string>& pool(Pool p) const;
  std::optional<Pool> pool_of(const std::string& id) const;
  /// Train-pool ids that are not augmented copies, sorted.
  std::vector<std::string> train_originals() const;
  int train_augmented_count() const;

  /// Throws CorruptWorkspace naming the first violated invariant.
  void validate() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Canonical JSON text (sorted keys, two-space indent, trailing newline).
std::string manifest_to_json(const Manifest& m);
/// Throws CorruptWorkspace on malformed input.
Manifest manifest_from_json(std::string_view text);

/// 16 hex chars of SHA-256 over the file bytes.
std::string content_id(std::span<const std::uint8_t> bytes);

struct ImportResult {
  std::vector<std::string> imported;    // new ids
  std::vector<std::string> duplicates;  // source paths skipped
  std::vector<std::string> warnings;
};

struct AugmentResult {
  int originals = 0;
  int augmented = 0;
  int dropped_boxes = 0;
  std::vector<std::string> skipped;  // originals that failed to decode
};

struct VerifyReport {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

class FileLock;
class Workspace;

/// Staged set of file writes plus the manifest they must agree with.
class Transaction {
 public:
  Transaction(Transaction&&) noexcept;
  Transaction& operator=(Transaction&&) = delete;
  ~Transaction();

  Manifest& manifest() { return manifest_; }

  void write_file(const std::string& rel_path, std::string_view contents);
  void write_labels(const std::string& id, std::span<const BoundingBox> boxes);
  void copy_file(const std::filesystem::path& from, const std::string& rel_path);
  void remove_file(const std::string& rel_path);

  /// Validates the manifest, commits it and applies the staged files.
  void commit();

 private:
  friend class Workspace;
  Transaction(Workspace& ws, Manifest base);
  std::filesystem::path StagedPath(const std::string& rel_path) const;

  Workspace* ws_;
  Manifest manifest_;
  std::vector<std::string> writes_;
  std::vector<std::string> removes_;
  bool done_ = false;
};

class Workspace {
 public:
  /// Creates the layout under an empty or absent `root`.
  static Workspace init(const std::filesystem::path& root,
                        const LabelMap& label_map);
  /// Loads the committed manifest. Throws CorruptWorkspace when missing.
  static Workspace open(const std::filesystem::path& root);

  Workspace(Workspace&&) noexcept;
  Workspace& operator=(Workspace&&) noexcept;
  ~Workspace();

  const std::filesystem::path& root() const { return root_; }
  const Manifest& manifest() const { return manifest_; }
  std::filesystem::path abs(const std::string& rel_path) const {
    return root_ / rel_path;
  }
  std::filesystem::path image_path(const std::string& id) const;
  std::filesystem::path label_path(const std::string& id) const;
  std::vector<BoundingBox> labels(const std::string& id) const;

  /// Re-reads manifest.json from disk.
  void reload();

  /// Exclusive workspace lock; re-entrant within one Workspace object.
  class WriteLock {
   public:
    ~WriteLock();
    WriteLock(WriteLock&&) noexcept;
    WriteLock(const WriteLock&) = delete;

   private:
    friend class Workspace;
    explicit WriteLock(Workspace* ws) : ws_(ws) {}
    Workspace* ws_;
  };
  WriteLock lock();

  /// Starts a transaction from the current manifest. Requires the lock.
  Transaction begin();

  ImportResult import_images(std::span<const std::filesystem::path> paths,
                             Pool pool,
                             const std::optional<std::filesystem::path>&
                                 labels_dir = std::nullopt);

  /// Stages an import into `tx` (see import_images).
  ImportResult stage_import(Transaction& tx,
                            std::span<const std::filesystem::path> paths,
                            Pool pool,
                            const std::optional<std::filesystem::path>& labels_dir);

  /// Moves reviewed images from the unlabeled pool into train with their
  /// corrected labels. All or nothing.
  void merge_reviewed(int iteration,
                      const std::map<std::string, std::vector<BoundingBox>>& corrected,
                      const LaborSummary& labor = {});
  void stage_merge(Transaction& tx, int iteration,
                   const std::map<std::string, std::vector<BoundingBox>>& corrected,
                   const LaborSummary& labor);

  /// Regenerates every augmented copy of the train originals.
  AugmentResult augment_split(const AugmentationSpec& spec);
  AugmentResult stage_augment(Transaction& tx, const AugmentationSpec& spec);

  /// Files on disk against manifest entries, one to one.
  VerifyReport verify() const;

 private:
  friend class Transaction;
  explicit Workspace(std::filesystem::path root);
  void Recover();

  std::filesystem::path root_;
  Manifest manifest_;
  std::unique_ptr<FileLock> lock_;
  int lock_depth_ = 0;
};

}  // namespace loopmark

#endif  // LOOPMARK_WORKSPACE_HPP_
