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

#include <spdlog/spdlog.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "loopmark/error.hpp"
#include "loopmark/fault.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/raster.hpp"

namespace loopmark {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kStagingDir = "staging/tx";

// Drops staging/tx and, when nothing else lives there, staging/ itself.
void ClearStaging(const fs::path& root) {
  std::error_code ec;
  fs::remove_all(root / kStagingDir, ec);
  fs::remove(root / "staging", ec);
}

template <typename E, std::size_t N>
std::string_view EnumName(E value, const std::string_view (&names)[N]) {
  const auto i = static_cast<std::size_t>(value);
  if (i >= N) throw std::logic_error("bad enum value");
  return names[i];
}

template <typename E, std::size_t N>
E EnumValue(std::string_view s, const std::string_view (&names)[N],
            const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  throw InvalidArgument(std::string("unknown ") + what + " '" + std::string(s) +
                        "'");
}

constexpr std::string_view kOriginNames[] = {"manual-pending", "manual",
                                             "unlabeled", "assisted",
                                             "augmented"};
constexpr std::string_view kPoolNames[] = {"train", "val", "unlabeled"};
constexpr std::string_view kPhaseNames[] = {
    "empty",   "seeded",          "augmented", "trained",
    "detected", "awaiting-review", "merged",    "evaluated"};

void InsertSorted(std::vector<std::string>& v, const std::string& id) {
  auto it = std::lower_bound(v.begin(), v.end(), id);
  if (it == v.end() || *it != id) v.insert(it, id);
}

void EraseSorted(std::vector<std::string>& v, const std::string& id) {
  auto it = std::lower_bound(v.begin(), v.end(), id);
  if (it != v.end() && *it == id) v.erase(it);
}

std::string ImageRel(const std::string& id) { return "images/" + id + ".png"; }
std::string LabelRel(const std::string& id) { return "labels/" + id + ".txt"; }

std::string AugmentedId(const std::string& parent, int k) {
  return parent + "__aug" + std::to_string(k);
}

json ToJson(const EditHistogram& h) {
  return {{"review", h.review},
          {"adjust", h.adjust},
          {"reclass", h.reclass},
          {"delete", h.remove},
          {"draw", h.draw}};
}

EditHistogram HistogramFromJson(const json& j) {
  EditHistogram h;
  h.review = j.at("review").get<int>();
  h.adjust = j.at("adjust").get<int>();
  h.reclass = j.at("reclass").get<int>();
  h.remove = j.at("delete").get<int>();
  h.draw = j.at("draw").get<int>();
  return h;
}

json ToJson(const LaborSummary& l) {
  return {{"images", l.images},
          {"boxes", l.boxes},
          {"total", l.total},
          {"manual_equivalent", l.manual_equivalent},
          {"edits", ToJson(l.edits)}};
}

LaborSummary LaborFromJson(const json& j) {
  LaborSummary l;
  l.images = j.at("images").get<int>();
  l.boxes = j.at("boxes").get<int>();
  l.total = j.at("total").get<double>();
  l.manual_equivalent = j.at("manual_equivalent").get<double>();
  l.edits = HistogramFromJson(j.at("edits"));
  return l;
}

json ToJson(const IterationRecord& r) {
  json j = {{"index", r.index},
            {"tag", r.tag},
            {"train_size_original", r.train_size_original},
            {"train_size_augmented", r.train_size_augmented},
            {"train_size_total", r.train_size_total},
            {"labor", ToJson(r.labor)},
            {"detector_run_id", r.detector_run_id},
            {"started_at", r.started_at},
            {"finished_at", r.finished_at}};
  if (r.eval) {
    j["eval"] = {{"best_f1", r.eval->best_f1},
                 {"best_f1_confidence", r.eval->best_f1_confidence},
                 {"map_50", r.eval->map_50},
                 {"map_90", r.eval->map_90},
                 {"val_images", r.eval->val_images}};
  } else {
    j["eval"] = nullptr;
  }
  return j;
}

IterationRecord RecordFromJson(const json& j) {
  IterationRecord r;
  r.index = j.at("index").get<int>();
  r.tag = j.at("tag").get<std::string>();
  r.train_size_original = j.at("train_size_original").get<int>();
  r.train_size_augmented = j.at("train_size_augmented").get<int>();
  r.train_size_total = j.at("train_size_total").get<int>();
  r.labor = LaborFromJson(j.at("labor"));
  r.detector_run_id = j.at("detector_run_id").get<std::string>();
  r.started_at = j.at("started_at").get<std::string>();
  r.finished_at = j.at("finished_at").get<std::string>();
  const json& e = j.at("eval");
  if (!e.is_null()) {
    EvalSummary s;
    s.best_f1 = e.at("best_f1").get<double>();
    s.best_f1_confidence = e.at("best_f1_confidence").get<double>();
    s.map_50 = e.at("map_50").get<double>();
    s.map_90 = e.at("map_90").get<double>();
    s.val_images = e.at("val_images").get<int>();
    r.eval = s;
  }
  return r;
}

json ToJson(const LoopState& s) {
  return {{"phase", std::string(to_string(s.phase))},
          {"iteration", s.iteration},
          {"pending_batch", s.pending_batch},
          {"weights", s.weights},
          {"detector_run_id", s.detector_run_id},
          {"train_original", s.train_original},
          {"train_augmented", s.train_augmented},
          {"iteration_started_at", s.iteration_started_at},
          {"train_labor", ToJson(s.train_labor)},
          {"batch_labor", ToJson(s.batch_labor)},
          {"complete", s.complete},
          {"tag", s.tag}};
}

LoopState LoopFromJson(const json& j) {
  LoopState s;
  s.phase = phase_from_string(j.at("phase").get<std::string>());
  s.iteration = j.at("iteration").get<int>();
  s.pending_batch = j.at("pending_batch").get<std::vector<std::string>>();
  s.weights = j.at("weights").get<std::string>();
  s.detector_run_id = j.at("detector_run_id").get<std::string>();
  s.train_original = j.at("train_original").get<int>();
  s.train_augmented = j.at("train_augmented").get<int>();
  s.iteration_started_at = j.at("iteration_started_at").get<std::string>();
  s.train_labor = LaborFromJson(j.at("train_labor"));
  s.batch_labor = LaborFromJson(j.at("batch_labor"));
  s.complete = j.at("complete").get<bool>();
  s.tag = j.at("tag").get<std::string>();
  return s;
}

}  // namespace

std::string_view to_string(Origin origin) {
  return EnumName(origin, kOriginNames);
}
std::string_view to_string(Pool pool) { return EnumName(pool, kPoolNames); }
std::string_view to_string(Phase phase) { return EnumName(phase, kPhaseNames); }
Origin origin_from_string(std::string_view s) {
  return EnumValue<Origin>(s, kOriginNames, "origin");
}
Pool pool_from_string(std::string_view s) {
  return EnumValue<Pool>(s, kPoolNames, "pool");
}
Phase phase_from_string(std::string_view s) {
  return EnumValue<Phase>(s, kPhaseNames, "phase");
}

bool is_labeled(Origin origin) {
  return origin == Origin::kManual || origin == Origin::kAssisted ||
         origin == Origin::kAugmented;
}

LaborSummary& LaborSummary::operator+=(const LaborSummary& other) {
  images += other.images;
  boxes += other.boxes;
  total += other.total;
  manual_equivalent += other.manual_equivalent;
  edits.review += other.edits.review;
  edits.adjust += other.edits.adjust;
  edits.reclass += other.edits.reclass;
  edits.remove += other.edits.remove;
  edits.draw += other.edits.draw;
  return *this;
}

std::vector<std::string>& Manifest::pool(Pool p) {
  switch (p) {
    case Pool::kTrain:
      return train;
    case Pool::kVal:
      return val;
    case Pool::kUnlabeled:
      return unlabeled;
  }
  throw std::logic_error("bad pool");
}

const std::vector<std::string>& Manifest::pool(Pool p) const {
  return const_cast<Manifest*>(this)->pool(p);
}

std::optional<Pool> Manifest::pool_of(const std::string& id) const {
  for (Pool p : {Pool::kTrain, Pool::kVal, Pool::kUnlabeled}) {
    if (std::binary_search(pool(p).begin(), pool(p).end(), id)) return p;
  }
  return std::nullopt;
}

std::vector<std::string> Manifest::train_originals() const {
  std::vector<std::string> out;
  for (const auto& id : train) {
    if (images.at(id).origin != Origin::kAugmented) out.push_back(id);
  }
  return out;
}

int Manifest::train_augmented_count() const {
  int n = 0;
  for (const auto& id : train) {
    if (images.at(id).origin == Origin::kAugmented) ++n;
  }
  return n;
}

void Manifest::validate() const {
  auto fail = [](const std::string& what) {
    throw CorruptWorkspace("manifest invariant violated: " + what);
  };
  if (schema_version != kManifestSchemaVersion) {
    fail("unsupported schema_version " + std::to_string(schema_version));
  }
  std::map<std::string, Pool> seen;
  for (Pool p : {Pool::kTrain, Pool::kVal, Pool::kUnlabeled}) {
    const auto& ids = pool(p);
    if (!std::is_sorted(ids.begin(), ids.end())) {
      fail(std::string(to_string(p)) + " pool is not sorted");
    }
    for (const auto& id : ids) {
      if (!seen.emplace(id, p).second) {
        fail("image " + id + " appears in more than one pool slot");
      }
      auto it = images.find(id);
      if (it == images.end()) fail("pool entry " + id + " has no image");
      const Origin o = it->second.origin;
      const bool ok = p == Pool::kTrain   ? (o != Origin::kUnlabeled)
                      : p == Pool::kVal   ? (o == Origin::kManual)
                                          : (o == Origin::kUnlabeled);
      if (!ok) {
        fail("image " + id + " has origin " + std::string(to_string(o)) +
             " in pool " + std::string(to_string(p)));
      }
    }
  }
  for (const auto& [id, e] : images) {
    if (!seen.count(id)) fail("image " + id + " is in no pool");
    if (e.path != ImageRel(id)) fail("image " + id + " has path " + e.path);
    if (e.dims.width_px <= 0 || e.dims.height_px <= 0) {
      fail("image " + id + " has no dimensions");
    }
    if (e.origin == Origin::kAugmented) {
      auto parent = images.find(e.parent);
      if (parent == images.end()) {
        fail("augmented image " + id + " references missing parent " +
             e.parent);
      }
      if (parent->second.origin == Origin::kAugmented ||
          seen[e.parent] != Pool::kTrain) {
        fail("augmented image " + id + " has a parent outside train originals");
      }
      if (e.copy_index < 0 || id != AugmentedId(e.parent, e.copy_index)) {
        fail("augmented image " + id + " has inconsistent copy index");
      }
    } else if (!e.parent.empty() || e.copy_index != -1) {
      fail("image " + id + " is not augmented but names a parent");
    }
  }
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    const auto& r = iterations[i];
    if (r.index != static_cast<int>(i) + 1) {
      fail("iteration indices are not contiguous from 1");
    }
    if (r.train_size_total != r.train_size_original + r.train_size_augmented) {
      fail("iteration " + std::to_string(r.index) + " train sizes do not add up");
    }
    if (r.eval && !(r.eval->best_f1 >= 0.0 && r.eval->best_f1 <= 1.0)) {
      fail("iteration " + std::to_string(r.index) + " best_f1 outside [0,1]");
    }
  }
}

std::string manifest_to_json(const Manifest& m) {
  json images = json::object();
  for (const auto& [id, e] : m.images) {
    json je = {{"path", e.path},
               {"width", e.dims.width_px},
               {"height", e.dims.height_px},
               {"origin", std::string(to_string(e.origin))},
               {"source_iteration", e.source_iteration},
               {"source_name", e.source_name}};
    if (e.origin == Origin::kAugmented) {
      je["parent"] = e.parent;
      je["copy_index"] = e.copy_index;
    }
    images[id] = std::move(je);
  }
  json iterations = json::array();
  for (const auto& r : m.iterations) iterations.push_back(ToJson(r));
  json j = {{"schema_version", m.schema_version},
            {"label_map", m.label_map.names()},
            {"images", std::move(images)},
            {"splits",
             {{"train", m.train}, {"val", m.val}, {"unlabeled", m.unlabeled}}},
            {"iterations", std::move(iterations)},
            {"loop", ToJson(m.loop)}};
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    Manifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion) {
      throw CorruptWorkspace("unsupported manifest schema_version " +
                             std::to_string(m.schema_version));
    }
    m.label_map = LabelMap(j.at("label_map").get<std::vector<std::string>>());
    for (const auto& [id, je] : j.at("images").items()) {
      ImageEntry e;
      e.path = je.at("path").get<std::string>();
      e.dims = {je.at("width").get<int>(), je.at("height").get<int>()};
      e.origin = origin_from_string(je.at("origin").get<std::string>());
      e.source_iteration = je.at("source_iteration").get<int>();
      e.source_name = je.at("source_name").get<std::string>();
      if (je.contains("parent")) e.parent = je.at("parent").get<std::string>();
      if (je.contains("copy_index")) e.copy_index = je.at("copy_index").get<int>();
      m.images.emplace(id, std::move(e));
    }
    const json& splits = j.at("splits");
    m.train = splits.at("train").get<std::vector<std::string>>();
    m.val = splits.at("val").get<std::vector<std::string>>();
    m.unlabeled = splits.at("unlabeled").get<std::vector<std::string>>();
    for (const auto& r : j.at("iterations")) {
      m.iterations.push_back(RecordFromJson(r));
    }
    m.loop = LoopFromJson(j.at("loop"));
    return m;
  } catch (const json::exception& e) {
    throw CorruptWorkspace(std::string("malformed manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptWorkspace(std::string("malformed manifest: ") + e.what());
  }
}

std::string content_id(std::span<const std::uint8_t> bytes) {
  return sha256_hex(bytes).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Transaction

Transaction::Transaction(Workspace& ws, Manifest base)
    : ws_(&ws), manifest_(std::move(base)) {
  const fs::path dir = ws.root_ / kStagingDir;
  fs::remove_all(dir);
  fs::create_directories(dir / "files");
}

Transaction::Transaction(Transaction&& other) noexcept
    : ws_(other.ws_),
      manifest_(std::move(other.manifest_)),
      writes_(std::move(other.writes_)),
      removes_(std::move(other.removes_)),
      done_(other.done_) {
  other.done_ = true;
}

Transaction::~Transaction() {
  if (done_) return;
  ClearStaging(ws_->root_);
}

fs::path Transaction::StagedPath(const std::string& rel_path) const {
  return ws_->root_ / kStagingDir / "files" / rel_path;
}

void Transaction::write_file(const std::string& rel_path,
                             std::string_view contents) {
  const fs::path staged = StagedPath(rel_path);
  fs::create_directories(staged.parent_path());
  write_file_atomic(staged, contents);
  EraseSorted(removes_, rel_path);
  InsertSorted(writes_, rel_path);
}

void Transaction::write_labels(const std::string& id,
                               std::span<const BoundingBox> boxes) {
  write_file(LabelRel(id), serialize_labels(boxes));
}

void Transaction::copy_file(const fs::path& from, const std::string& rel_path) {
  const fs::path staged = StagedPath(rel_path);
  fs::create_directories(staged.parent_path());
  fs::copy_file(from, staged, fs::copy_options::overwrite_existing);
  EraseSorted(removes_, rel_path);
  InsertSorted(writes_, rel_path);
}

void Transaction::remove_file(const std::string& rel_path) {
  if (std::binary_search(writes_.begin(), writes_.end(), rel_path)) {
    EraseSorted(writes_, rel_path);
    std::error_code ec;
    fs::remove(StagedPath(rel_path), ec);
  }
  InsertSorted(removes_, rel_path);
}

namespace {

void ApplyStaged(const fs::path& root, const json& ops) {
  const fs::path files = root / kStagingDir / "files";
  for (const auto& rel : ops.at("writes")) {
    const fs::path from = files / rel.get<std::string>();
    const fs::path to = root / rel.get<std::string>();
    if (!fs::exists(from)) continue;  // moved before an interruption
    fs::create_directories(to.parent_path());
    fs::rename(from, to);
  }
  for (const auto& rel : ops.at("removes")) {
    std::error_code ec;
    fs::remove(root / rel.get<std::string>(), ec);
  }
}

}  // namespace

void Transaction::commit() {
  if (done_) throw std::logic_error("transaction already finished");
  manifest_.validate();
  const std::string text = manifest_to_json(manifest_);
  const fs::path root = ws_->root_;
  json ops = {{"manifest_sha256", sha256_hex(text)},
              {"writes", writes_},
              {"removes", removes_}};
  write_file_atomic(root / kStagingDir / "ops.json", ops.dump(), true);
  fault_point("tx:staged");
  write_file_atomic(root / kManifestFile, text, true);
  fault_point("tx:committed");
  ApplyStaged(root, ops);
  ClearStaging(root);
  ws_->manifest_ = std::move(manifest_);
  done_ = true;
}

// ---------------------------------------------------------------------------
// Workspace

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}
Workspace::Workspace(Workspace&&) noexcept = default;
Workspace& Workspace::operator=(Workspace&&) noexcept = default;
Workspace::~Workspace() = default;

Workspace Workspace::init(const fs::path& root, const LabelMap& label_map) {
  if (label_map.empty()) throw UserError("label map has no classes");
  std::error_code ec;
  if (fs::exists(root, ec)) {
    if (!fs::is_directory(root) || !fs::is_empty(root)) {
      throw UserError("refusing to initialise non-empty path " + root.string());
    }
  }
  try {
    for (const char* dir : {"images", "labels", "predictions", "runs"}) {
      fs::create_directories(root / dir);
    }
    write_label_map(root / "classes.txt", label_map);
    Manifest m;
    m.label_map = label_map;
    write_file_atomic(root / kManifestFile, manifest_to_json(m), true);
  } catch (const fs::filesystem_error& e) {
    throw UserError(std::string("cannot create workspace: ") + e.what());
  }
  return open(root);
}

Workspace Workspace::open(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw UserError("no workspace at " + root.string());
  }
  if (!fs::exists(root / kManifestFile)) {
    throw CorruptWorkspace("missing " + (root / kManifestFile).string());
  }
  Workspace ws(root);
  ws.reload();
  return ws;
}

void Workspace::reload() {
  manifest_ = manifest_from_json(read_file(root_ / kManifestFile));
}

fs::path Workspace::image_path(const std::string& id) const {
  auto it = manifest_.images.find(id);
  if (it == manifest_.images.end()) throw UserError("unknown image id " + id);
  return root_ / it->second.path;
}

fs::path Workspace::label_path(const std::string& id) const {
  return root_ / LabelRel(id);
}

std::vector<BoundingBox> Workspace::labels(const std::string& id) const {
  return read_labels(label_path(id));
}

Workspace::WriteLock::~WriteLock() {
  if (ws_ && --ws_->lock_depth_ == 0) ws_->lock_.reset();
}

Workspace::WriteLock::WriteLock(WriteLock&& other) noexcept : ws_(other.ws_) {
  other.ws_ = nullptr;
}

Workspace::WriteLock Workspace::lock() {
  if (lock_depth_ == 0) {
    lock_ = std::make_unique<FileLock>(root_ / ".lock");
    try {
      Recover();
      reload();
    } catch (...) {
      lock_.reset();
      throw;
    }
  }
  ++lock_depth_;
  return WriteLock(this);
}

void Workspace::Recover() {
  const fs::path dir = root_ / kStagingDir;
  std::error_code ec;
  fs::remove(root_ / "manifest.json.tmp", ec);
  if (!fs::exists(dir)) return;
  try {
    const json ops = json::parse(read_file(dir / "ops.json"));
    const std::string committed = read_file(root_ / kManifestFile);
    if (ops.at("manifest_sha256").get<std::string>() == sha256_hex(committed)) {
      spdlog::info("rolling forward an interrupted workspace transaction");
      ApplyStaged(root_, ops);
    } else {
      spdlog::info("discarding an uncommitted workspace transaction");
    }
  } catch (const std::exception&) {
    // No readable ops.json means the manifest was never replaced.
    spdlog::info("discarding an incomplete workspace transaction");
  }
  ClearStaging(root_);
}

Transaction Workspace::begin() {
  if (lock_depth_ == 0) {
    throw std::logic_error("workspace transaction without the write lock");
  }
  return Transaction(*this, manifest_);
}

ImportResult Workspace::import_images(std::span<const fs::path> paths, Pool pool,
                                      const std::optional<fs::path>& labels_dir) {
  auto guard = lock();
  Transaction tx = begin();
  ImportResult result = stage_import(tx, paths, pool, labels_dir);
  if (!result.imported.empty()) tx.commit();
  return result;
}

ImportResult Workspace::stage_import(Transaction& tx,
                                     std::span<const fs::path> paths, Pool pool,
                                     const std::optional<fs::path>& labels_dir) {
  ImportResult result;
  if (paths.empty()) {
    result.warnings.push_back("no files to import");
    spdlog::warn("import: no files to import");
    return result;
  }
  if (pool == Pool::kUnlabeled && labels_dir) {
    throw UserError("images imported into the unlabeled pool cannot carry labels");
  }
  if (pool == Pool::kVal && !labels_dir) {
    throw UserError("validation images must be imported with labels");
  }
  Manifest& m = tx.manifest();
  for (const auto& path : paths) {
    std::vector<std::uint8_t> bytes;
    Raster raster;
    try {
      bytes = read_bytes(path);
      raster = decode_png(bytes);
    } catch (const Error& e) {
      throw UserError("cannot import " + path.string() + ": " + e.what());
    }
    const std::string id = content_id(bytes);
    if (m.images.count(id)) {
      result.duplicates.push_back(path.string());
      spdlog::warn("import: {} duplicates image {}, skipped", path.string(), id);
      continue;
    }
    ImageEntry e;
    e.path = ImageRel(id);
    e.dims = {raster.width, raster.height};
    e.source_iteration = m.loop.iteration;
    e.source_name = path.filename().string();
    e.origin = pool == Pool::kUnlabeled ? Origin::kUnlabeled
                                        : Origin::kManualPending;
    if (labels_dir) {
      const fs::path label_file =
          *labels_dir / (path.stem().string() + ".txt");
      if (fs::exists(label_file)) {
        std::vector<BoundingBox> boxes;
        try {
          boxes = read_labels(label_file);
          validate_against(boxes, m.label_map);
        } catch (const Error& err) {
          throw UserError(label_file.string() + ": " + err.what());
        }
        tx.write_labels(id, boxes);
        e.origin = Origin::kManual;
      } else if (pool == Pool::kVal) {
        throw UserError("validation image " + path.string() +
                        " has no label file " + label_file.string());
      } else {
        result.warnings.push_back("no labels for " + path.string());
      }
    }
    tx.copy_file(path, e.path);
    m.images.emplace(id, std::move(e));
    InsertSorted(m.pool(pool), id);
    result.imported.push_back(id);
  }
  return result;
}

void Workspace::merge_reviewed(
    int iteration, const std::map<std::string, std::vector<BoundingBox>>& corrected,
    const LaborSummary& labor) {
  auto guard = lock();
  Transaction tx = begin();
  stage_merge(tx, iteration, corrected, labor);
  tx.commit();
}

void Workspace::stage_merge(
    Transaction& tx, int iteration,
    const std::map<std::string, std::vector<BoundingBox>>& corrected,
    const LaborSummary& labor) {
  Manifest& m = tx.manifest();
  for (const auto& [id, boxes] : corrected) {
    auto it = m.images.find(id);
    if (it == m.images.end()) throw UserError("unknown image id " + id);
    if (m.pool_of(id) != Pool::kUnlabeled) {
      throw UserError("image " + id + " is not in the unlabeled pool");
    }
    try {
      validate_against(boxes, m.label_map);
    } catch (const InvalidArgument& e) {
      throw UserError("labels for " + id + ": " + e.what());
    }
  }
  for (const auto& [id, boxes] : corrected) {
    tx.write_labels(id, boxes);
    ImageEntry& e = m.images.at(id);
    e.origin = Origin::kAssisted;
    e.source_iteration = iteration;
    EraseSorted(m.unlabeled, id);
    InsertSorted(m.train, id);
  }
  m.loop.batch_labor += labor;
}

AugmentResult Workspace::augment_split(const AugmentationSpec& spec) {
  auto guard = lock();
  Transaction tx = begin();
  AugmentResult result = stage_augment(tx, spec);
  tx.commit();
  return result;
}

AugmentResult Workspace::stage_augment(Transaction& tx,
                                       const AugmentationSpec& spec) {
  spec.validate();
  Manifest& m = tx.manifest();
  std::vector<std::string> stale;
  for (const auto& [id, e] : m.images) {
    if (e.origin == Origin::kAugmented) stale.push_back(id);
  }
  for (const auto& id : stale) {
    tx.remove_file(ImageRel(id));
    tx.remove_file(LabelRel(id));
    m.images.erase(id);
    EraseSorted(m.train, id);
  }
  const std::vector<std::string> originals = m.train_originals();
  if (originals.empty()) throw UserError("train pool is empty");
  for (const auto& id : originals) {
    if (!is_labeled(m.images.at(id).origin)) {
      throw UserError("train image " + id + " has no labels yet");
    }
  }
  std::map<std::string, std::vector<int>> copies;
  for (const auto& job : plan_augmentation(originals, spec)) {
    copies[job.image_id].push_back(job.copy_index);
  }
  AugmentResult result;
  result.originals = static_cast<int>(originals.size());
  for (const auto& [id, ks] : copies) {
    const ImageEntry parent = m.images.at(id);
    Raster raster;
    std::vector<BoundingBox> boxes;
    try {
      raster = read_png(root_ / parent.path);
      boxes = read_labels(label_path(id));
    } catch (const Error& e) {
      spdlog::warn("augment: skipping {}: {}", id, e.what());
      result.skipped.push_back(id);
      continue;
    }
    for (int k : ks) {
      const Affine2 t = sample_affine(spec, parent.dims, id, k);
      const std::vector<BoundingBox> moved =
          transform_boxes(boxes, t, parent.dims, spec.min_area_keep_fraction);
      result.dropped_boxes += static_cast<int>(boxes.size() - moved.size());
      const std::vector<std::uint8_t> png = encode_png(resample_raster(raster, t));
      const std::string aug_id = AugmentedId(id, k);
      ImageEntry e;
      e.path = ImageRel(aug_id);
      e.dims = parent.dims;
      e.origin = Origin::kAugmented;
      e.source_iteration = m.loop.iteration;
      e.parent = id;
      e.copy_index = k;
      tx.write_file(e.path, std::string_view(
                                reinterpret_cast<const char*>(png.data()),
                                png.size()));
      tx.write_labels(aug_id, moved);
      m.images.emplace(aug_id, std::move(e));
      InsertSorted(m.train, aug_id);
      ++result.augmented;
    }
  }
  m.loop.train_original = result.originals;
  m.loop.train_augmented = result.augmented;
  return result;
}

VerifyReport Workspace::verify() const {
  VerifyReport report;
  auto problem = [&](std::string what) {
    report.problems.push_back(std::move(what));
  };
  try {
    manifest_.validate();
  } catch (const CorruptWorkspace& e) {
    problem(e.what());
  }
  try {
    if (read_label_map(root_ / "classes.txt") != manifest_.label_map) {
      problem("classes.txt disagrees with the manifest label map");
    }
  } catch (const Error& e) {
    problem(std::string("classes.txt: ") + e.what());
  }
  for (const auto& [id, e] : manifest_.images) {
    if (!fs::is_regular_file(root_ / e.path)) {
      problem("missing image file " + e.path);
    }
    const fs::path label = label_path(id);
    if (is_labeled(e.origin)) {
      if (!fs::is_regular_file(label)) {
        problem("missing label file " + LabelRel(id));
        continue;
      }
      try {
        validate_against(read_labels(label), manifest_.label_map);
      } catch (const Error& err) {
        problem(LabelRel(id) + ": " + err.what());
      }
    } else if (fs::exists(label)) {
      problem("label file " + LabelRel(id) + " for an image without labels");
    }
  }
  for (const auto& file : list_files(root_ / "images")) {
    const std::string stem = file.stem().string();
    auto it = manifest_.images.find(stem);
    if (it == manifest_.images.end() ||
        it->second.path != "images/" + file.filename().string()) {
      problem("untracked image file images/" + file.filename().string());
    }
  }
  for (const auto& file : list_files(root_ / "labels")) {
    const std::string stem = file.stem().string();
    if (!manifest_.images.count(stem) || file.extension() != ".txt") {
      problem("untracked label file labels/" + file.filename().string());
    }
  }
  if (fs::exists(root_ / kStagingDir)) {
    problem("an interrupted transaction is pending under " +
            std::string(kStagingDir));
  }
  return report;
}

}  // namespace loopmark
