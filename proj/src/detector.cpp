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

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"

extern char** environ;

namespace loopmark {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxOutput = 64 * 1024;

std::string ShellQuote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

void RequirePlaceholders(const std::string& templ,
                         std::initializer_list<const char*> names,
                         const char* which) {
  for (const char* name : names) {
    if (templ.find(std::string("{") + name + "}") == std::string::npos) {
      throw InvalidArgument(std::string(which) + " must contain {" + name + "}");
    }
  }
}

}  // namespace

void AdapterConfig::validate() const {
  if (!(timeout_s > 0.0)) throw InvalidArgument("adapter timeout_s must be > 0");
  if (!(heartbeat_s > 0.0)) {
    throw InvalidArgument("adapter heartbeat_s must be > 0");
  }
  RequirePlaceholders(train_command, {"dataset_dir", "weights_out"},
                      "train_command");
  RequirePlaceholders(detect_command,
                      {"weights_in", "images_dir", "predictions_dir"},
                      "detect_command");
}

std::string substitute_placeholders(
    std::string_view templ, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < templ.size()) {
    if (templ[i] == '{') {
      const std::size_t close = templ.find('}', i);
      if (close != std::string_view::npos) {
        const std::string name(templ.substr(i + 1, close - i - 1));
        auto it = values.find(name);
        if (it == values.end()) {
          throw InvalidArgument("unknown placeholder {" + name + "}");
        }
        out += ShellQuote(it->second);
        i = close + 1;
        continue;
      }
    }
    out += templ[i++];
  }
  return out;
}

ProcessResult run_process(const std::string& command, double timeout_s,
                          const fs::path& workdir,
                          const std::vector<std::pair<std::string, std::string>>&
                              extra_env,
                          double heartbeat_s) {
  // Build everything the child needs before fork.
  std::vector<std::string> env_store;
  for (char** e = environ; *e; ++e) {
    std::string_view kv(*e);
    const std::string key(kv.substr(0, kv.find('=')));
    bool overridden = false;
    for (const auto& [k, v] : extra_env) overridden |= (k == key);
    if (!overridden) env_store.emplace_back(kv);
  }
  for (const auto& [k, v] : extra_env) env_store.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_store) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
  const std::string dir = workdir.string();

  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw AdapterError(std::string("pipe failed: ") + std::strerror(errno));
  }
  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw AdapterError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(fds[1], STDOUT_FILENO);
    ::dup2(fds[1], STDERR_FILENO);
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    if (!dir.empty() && ::chdir(dir.c_str()) != 0) ::_exit(127);
    ::execve(argv[0], argv, envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(fds[1]);

  ProcessResult result;
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };
  double next_beat = heartbeat_s;
  bool open = true;
  char buf[4096];
  while (open) {
    const double left = timeout_s - elapsed();
    if (left <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int wait_ms = static_cast<int>(std::min(left, 0.2) * 1000) + 1;
    const int rc = ::poll(&pfd, 1, wait_ms);
    if (rc < 0 && errno != EINTR) break;
    if (rc > 0) {
      const ssize_t n = ::read(fds[0], buf, sizeof buf);
      if (n > 0) {
        result.output.append(buf, static_cast<std::size_t>(n));
        if (result.output.size() > kMaxOutput) {
          result.output.erase(0, result.output.size() - kMaxOutput);
        }
      } else if (n == 0) {
        open = false;
      }
    }
    if (elapsed() >= next_beat) {
      spdlog::info("still running after {:.0f}s: {}", elapsed(), command);
      next_beat += heartbeat_s;
    }
  }
  ::close(fds[0]);
  int status = 0;
  if (result.timed_out) {
    ::kill(-pid, SIGKILL);
    ::waitpid(pid, &status, 0);
  } else {
    // Output closed; the shell may still be exiting.
    while (true) {
      const pid_t w = ::waitpid(pid, &status, WNOHANG);
      if (w == pid) break;
      if (elapsed() >= timeout_s) {
        result.timed_out = true;
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        break;
      }
      ::usleep(2000);
    }
  }
  result.seconds = elapsed();
  if (!result.timed_out) {
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status)
                                         : 128 + WTERMSIG(status);
  }
  return result;
}

void write_dataset_metadata(const fs::path& dataset_dir,
                            const LabelMap& label_map) {
  write_label_map(dataset_dir / "classes.txt", label_map);
  std::string yaml = "path: " + fs::absolute(dataset_dir).string() + "\n";
  yaml += "train: images\n";
  if (fs::exists(dataset_dir / "val" / "images")) yaml += "val: val/images\n";
  yaml += "nc: " + std::to_string(label_map.size()) + "\nnames:\n";
  for (std::size_t i = 0; i < label_map.size(); ++i) {
    yaml += "  " + std::to_string(i) + ": " +
            label_map.name(static_cast<int>(i)) + "\n";
  }
  write_file_atomic(dataset_dir / "data.yaml", yaml);
}

fs::path run_train(const AdapterConfig& cfg, const fs::path& dataset_dir,
                   const fs::path& weights_out,
                   const std::optional<fs::path>& weights_in, int iteration) {
  for (const char* part : {"images", "labels", "classes.txt"}) {
    if (!fs::exists(dataset_dir / part)) {
      throw UserError("dataset " + dataset_dir.string() + " lacks " + part);
    }
  }
  if (weights_out.has_parent_path()) {
    fs::create_directories(weights_out.parent_path());
  }
  std::error_code ec;
  fs::remove(weights_out, ec);
  const std::string cmd = substitute_placeholders(
      cfg.train_command,
      {{"dataset_dir", dataset_dir.string()},
       {"weights_out", weights_out.string()},
       {"weights_in", weights_in ? weights_in->string() : std::string()}});
  spdlog::info("train (iteration {}): {}", iteration, cmd);
  const ProcessResult r =
      run_process(cmd, cfg.timeout_s, cfg.workdir,
                  {{"LOOPMARK_ITER", std::to_string(iteration)}}, cfg.heartbeat_s);
  if (r.timed_out) {
    throw AdapterTimeout("train command timed out after " +
                             std::to_string(cfg.timeout_s) + "s",
                         r.output);
  }
  if (r.exit_code != 0) {
    throw TrainFailed("train command exited with status " +
                          std::to_string(r.exit_code),
                      r.output);
  }
  if (!fs::is_regular_file(weights_out)) {
    throw MissingWeights("train command did not produce " + weights_out.string(),
                         r.output);
  }
  return weights_out;
}

int run_detect(const AdapterConfig& cfg, const fs::path& weights,
               const fs::path& images_dir, const fs::path& predictions_dir,
               int iteration) {
  if (!fs::is_regular_file(weights)) {
    throw MissingWeights("weights file " + weights.string() + " does not exist");
  }
  if (list_files(images_dir, ".png").empty()) {
    throw UserError("no images to detect in " + images_dir.string());
  }
  fs::create_directories(predictions_dir);
  const std::string cmd = substitute_placeholders(
      cfg.detect_command, {{"weights_in", weights.string()},
                           {"images_dir", images_dir.string()},
                           {"predictions_dir", predictions_dir.string()}});
  spdlog::info("detect (iteration {}): {}", iteration, cmd);
  const ProcessResult r =
      run_process(cmd, cfg.timeout_s, cfg.workdir,
                  {{"LOOPMARK_ITER", std::to_string(iteration)}}, cfg.heartbeat_s);
  if (r.timed_out) {
    throw AdapterTimeout("detect command timed out after " +
                             std::to_string(cfg.timeout_s) + "s",
                         r.output);
  }
  if (r.exit_code != 0) {
    throw DetectFailed("detect command exited with status " +
                           std::to_string(r.exit_code),
                       r.output);
  }
  return validate_predictions(images_dir, predictions_dir);
}

int validate_predictions(const fs::path& images_dir,
                         const fs::path& predictions_dir,
                         const LabelMap* label_map) {
  int count = 0;
  for (const auto& image : list_files(images_dir, ".png")) {
    const fs::path file = predictions_dir / (image.stem().string() + ".txt");
    if (!fs::is_regular_file(file)) {
      throw DetectFailed("missing prediction file " + file.string());
    }
    try {
      const auto preds = read_predictions(file);
      if (label_map) {
        for (const auto& p : preds) {
          if (!label_map->contains(p.box.class_id)) {
            throw InvalidArgument("class id " + std::to_string(p.box.class_id) +
                                  " not in label map");
          }
        }
      }
    } catch (const FormatError& e) {
      throw DetectFailed(file.string() + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw DetectFailed(file.string() + ": " + e.what());
    }
    ++count;
  }
  return count;
}

CommandDetector::CommandDetector(AdapterConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

fs::path CommandDetector::train(const TrainRequest& req) {
  return run_train(cfg_, req.dataset_dir, req.weights_out, req.weights_in,
                   req.iteration);
}

int CommandDetector::detect(const DetectRequest& req) {
  return run_detect(cfg_, req.weights, req.images_dir, req.predictions_dir,
                    req.iteration);
}

}  // namespace loopmark
