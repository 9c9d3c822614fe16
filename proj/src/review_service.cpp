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


#include "loopmark/review_service.hpp"

// A browser opens several connections at once; the default backlog of 5 drops them.
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <mutex>
#include <nlohmann/json.hpp>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/orchestrator.hpp"
#include "loopmark/review.hpp"
#include "loopmark/workspace.hpp"

namespace loopmark {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Finalizing never trains or detects.
class NoDetector : public Detector {
 public:
  fs::path train(const TrainRequest&) override {
    throw std::logic_error("review service cannot train");
  }
  int detect(const DetectRequest&) override {
    throw std::logic_error("review service cannot detect");
  }
};

struct HttpError {
  int status;
  json body;
};

[[noreturn]] void Fail(int status, const std::string& message,
                       json extra = json::object()) {
  extra["error"] = message;
  throw HttpError{status, std::move(extra)};
}

json BoxJson(const BoundingBox& b) {
  return {{"class_id", b.class_id}, {"cx", b.cx}, {"cy", b.cy},
          {"w", b.w},               {"h", b.h}};
}

}  // namespace

struct ReviewService::Impl {
  fs::path root;
  AnnotatorCostModel costs;
  std::string fixed_clock;
  httplib::Server server;
  std::thread thread;
  std::mutex write_mu;

  struct Snapshot {
    Workspace ws;
    int iteration;
  };

  Snapshot Open(bool require_review) const {
    Workspace ws = Workspace::open(root);
    const LoopState& loop = ws.manifest().loop;
    if (require_review && loop.phase != Phase::kAwaitingReview) {
      Fail(409, "workspace is not awaiting review",
           {{"phase", std::string(to_string(loop.phase))}});
    }
    return {std::move(ws), loop.iteration};
  }

  static const ReviewItem& Item(const ReviewSession& s, const std::string& id) {
    auto it = s.items.find(id);
    if (it == s.items.end()) Fail(404, "unknown image " + id);
    return it->second;
  }

  std::string Now() const {
    return fixed_clock.empty() ? utc_timestamp() : fixed_clock;
  }

  json SessionJson() const {
    Workspace ws = Workspace::open(root);
    const LoopState& loop = ws.manifest().loop;
    ReviewBundle bundle(root, loop.iteration);
    json j = {{"iteration", loop.iteration},
              {"phase", std::string(to_string(loop.phase))},
              {"active", loop.phase == Phase::kAwaitingReview}};
    if (!bundle.exists()) {
      j["session"] = nullptr;
      return j;
    }
    const ReviewSession s = bundle.load_session();
    int pending = 0, edited = 0, accepted = 0;
    for (const auto& [id, item] : s.items) {
      pending += item.status == ItemStatus::kPending;
      edited += item.status == ItemStatus::kEdited;
      accepted += item.status == ItemStatus::kAccepted;
    }
    j["session"] = {{"iteration", s.iteration},
                    {"started_at", s.started_at},
                    {"updated_at", s.updated_at},
                    {"finalized", s.finalized},
                    {"auto_accept_confidence",
                     s.auto_accept_confidence ? json(*s.auto_accept_confidence)
                                              : json(nullptr)},
                    {"counts",
                     {{"total", static_cast<int>(s.items.size())},
                      {"pending", pending},
                      {"edited", edited},
                      {"accepted", accepted}}}};
    return j;
  }

  json ItemsJson() const {
    Snapshot snap = Open(true);
    ReviewBundle bundle(root, snap.iteration);
    const ReviewSession s = bundle.load_session();
    json items = json::array();
    for (const auto& [id, item] : s.items) {
      const ImageDims dims = snap.ws.manifest().images.at(id).dims;
      items.push_back({{"id", id},
                       {"status", std::string(to_string(item.status))},
                       {"predictions", item.predictions},
                       {"pre_accepted", item.pre_accepted},
                       {"width", dims.width_px},
                       {"height", dims.height_px}});
    }
    return {{"iteration", snap.iteration}, {"items", std::move(items)}};
  }

  json PredictionsJson(const std::string& id) const {
    Snapshot snap = Open(true);
    ReviewBundle bundle(root, snap.iteration);
    const ReviewSession s = bundle.load_session();
    const ReviewItem& item = Item(s, id);
    const auto preds = bundle.predictions(id);
    const auto flags = pre_accept_flags(preds, s.auto_accept_confidence);
    json list = json::array();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      json b = BoxJson(preds[i].box);
      b["confidence"] = preds[i].confidence;
      b["pre_accepted"] = static_cast<bool>(flags[i]);
      list.push_back(std::move(b));
    }
    json corrected = nullptr;
    if (auto staged = bundle.staged_correction(id)) {
      corrected = json::array();
      for (const auto& b : *staged) corrected.push_back(BoxJson(b));
    }
    const ImageDims dims = snap.ws.manifest().images.at(id).dims;
    return {{"id", id},
            {"status", std::string(to_string(item.status))},
            {"width", dims.width_px},
            {"height", dims.height_px},
            {"auto_accept_confidence", s.auto_accept_confidence
                                           ? json(*s.auto_accept_confidence)
                                           : json(nullptr)},
            {"predictions", std::move(list)},
            {"corrected", std::move(corrected)}};
  }

  json LabelMapJson() const {
    Workspace ws = Workspace::open(root);
    json classes = json::array();
    const auto& names = ws.manifest().label_map.names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      classes.push_back({{"id", static_cast<int>(i)}, {"name", names[i]}});
    }
    return {{"classes", std::move(classes)}};
  }

  json PutLabels(const std::string& id, const std::string& body) {
    std::lock_guard<std::mutex> guard(write_mu);
    Snapshot snap = Open(true);
    ReviewBundle bundle(root, snap.iteration);
    ReviewSession s = bundle.load_session();
    const ReviewItem& item = Item(s, id);
    if (item.status == ItemStatus::kAccepted) {
      Fail(409, "item " + id + " is already accepted");
    }
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      Fail(400, "request body is not JSON");
    }
    if (!j.is_object() || !j.contains("boxes") || !j["boxes"].is_array()) {
      Fail(400, "request body needs a \"boxes\" array");
    }
    std::vector<BoundingBox> boxes;
    const LabelMap& map = snap.ws.manifest().label_map;
    for (std::size_t i = 0; i < j["boxes"].size(); ++i) {
      const json& b = j["boxes"][i];
      BoundingBox box;
      try {
        box = BoundingBox{b.at("class_id").get<int>(), b.at("cx").get<double>(),
                          b.at("cy").get<double>(), b.at("w").get<double>(),
                          b.at("h").get<double>()};
      } catch (const json::exception&) {
        Fail(422, "box " + std::to_string(i) + " is missing a field or has a bad type",
             {{"index", i}});
      }
      try {
        const BoundingBox one[] = {box};
        validate_against(one, map);
        boxes.push_back(canonical(box));
      } catch (const Error& e) {
        Fail(422, "box " + std::to_string(i) + ": " + e.what(), {{"index", i}});
      }
    }
    bundle.stage_correction(id, boxes);
    s.items.at(id).status = ItemStatus::kEdited;
    s.updated_at = Now();
    bundle.save_session(s);
    json stored = json::array();
    for (const auto& b : boxes) stored.push_back(BoxJson(b));
    return {{"id", id}, {"status", "edited"}, {"boxes", std::move(stored)}};
  }

  json Accept(const std::string& id) {
    std::lock_guard<std::mutex> guard(write_mu);
    Snapshot snap = Open(true);
    ReviewBundle bundle(root, snap.iteration);
    ReviewSession s = bundle.load_session();
    const ReviewItem& item = Item(s, id);
    if (item.status == ItemStatus::kEdited) {
      Fail(409, "item " + id + " already has edited labels");
    }
    s.items.at(id).status = ItemStatus::kAccepted;
    s.updated_at = Now();
    bundle.save_session(s);
    return {{"id", id}, {"status", "accepted"}};
  }

  json Finalize() {
    std::lock_guard<std::mutex> guard(write_mu);
    Workspace ws = Workspace::open(root);
    auto lock = ws.lock();
    const LoopState& loop = ws.manifest().loop;
    if (loop.phase != Phase::kAwaitingReview) {
      Fail(409, "workspace is not awaiting review",
           {{"phase", std::string(to_string(loop.phase))}});
    }
    ReviewBundle bundle(root, loop.iteration);
    const ReviewSession s = bundle.load_session();
    const auto pending = s.pending();
    if (!pending.empty()) {
      Fail(409, std::to_string(pending.size()) + " item(s) still pending",
           {{"pending", pending}});
    }
    std::map<std::string, std::vector<BoundingBox>> corrected;
    for (const auto& id : loop.pending_batch) corrected[id] = bundle.final_labels(id);
    LoopConfig cfg;
    cfg.costs = costs;
    cfg.fixed_clock = fixed_clock;
    Orchestrator orch(ws, cfg, std::make_unique<NoDetector>());
    orch.finalize_review(corrected);
    const Manifest& m = ws.manifest();
    return {{"iteration", loop.iteration},
            {"phase", std::string(to_string(m.loop.phase))},
            {"merged", static_cast<int>(corrected.size())},
            {"train_size", static_cast<int>(m.train_originals().size())}};
  }
};

namespace {

template <typename F>
void Respond(httplib::Response& res, F&& f) {
  try {
    json body = f();
    res.status = 200;
    res.set_content(body.dump(), "application/json");
  } catch (const HttpError& e) {
    res.status = e.status;
    res.set_content(e.body.dump(), "application/json");
  } catch (const CorruptWorkspace& e) {
    res.status = 500;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const UserError& e) {
    res.status = 409;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  }
}

}  // namespace

ReviewService::ReviewService(fs::path workspace_root, AnnotatorCostModel costs,
                             std::string fixed_clock)
    : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(workspace_root);
  impl_->costs = costs;
  impl_->fixed_clock = std::move(fixed_clock);
  Workspace::open(impl_->root);  // fail early on a bad path
  Impl* d = impl_.get();
  auto& srv = d->server;
  srv.Get("/api/session", [d](const httplib::Request&, httplib::Response& res) {
    Respond(res, [&] { return d->SessionJson(); });
  });
  srv.Get("/api/items", [d](const httplib::Request&, httplib::Response& res) {
    Respond(res, [&] { return d->ItemsJson(); });
  });
  srv.Get("/api/labelmap", [d](const httplib::Request&, httplib::Response& res) {
    Respond(res, [&] { return d->LabelMapJson(); });
  });
  srv.Get(R"(/api/items/([^/]+)/predictions)",
          [d](const httplib::Request& req, httplib::Response& res) {
            Respond(res, [&] { return d->PredictionsJson(req.matches[1]); });
          });
  srv.Get(R"(/api/items/([^/]+)/image)",
          [d](const httplib::Request& req, httplib::Response& res) {
            try {
              Impl::Snapshot snap = d->Open(true);
              ReviewBundle bundle(d->root, snap.iteration);
              const std::string id = req.matches[1];
              Impl::Item(bundle.load_session(), id);
              res.set_content(read_file(bundle.image_path(id)), "image/png");
            } catch (...) {
              Respond(res, [] () -> json { throw; });
            }
          });
  srv.Put(R"(/api/items/([^/]+)/labels)",
          [d](const httplib::Request& req, httplib::Response& res) {
            Respond(res, [&] { return d->PutLabels(req.matches[1], req.body); });
          });
  srv.Post(R"(/api/items/([^/]+)/accept)",
           [d](const httplib::Request& req, httplib::Response& res) {
             Respond(res, [&] { return d->Accept(req.matches[1]); });
           });
  srv.Post("/api/finalize", [d](const httplib::Request&, httplib::Response& res) {
    Respond(res, [&] { return d->Finalize(); });
  });
}

ReviewService::~ReviewService() { stop(); }

void ReviewService::set_static_dir(const fs::path& dir) {
  if (!impl_->server.set_mount_point("/", dir.string())) {
    throw UserError("cannot serve static files from " + dir.string());
  }
}

void ReviewService::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw UserError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

int ReviewService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw UserError("cannot bind " + host);
  impl_->thread = std::thread([d = impl_.get()] { d->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ReviewService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace loopmark
