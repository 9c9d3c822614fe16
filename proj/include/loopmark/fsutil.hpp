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

#ifndef LOOPMARK_FSUTIL_HPP_
#define LOOPMARK_FSUTIL_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loopmark {

std::string read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// Writes to `<path>.tmp` then renames over `path`. With `durable` the
/// temporary file is fsynced before the rename.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents, bool durable = false);

void append_line(const std::filesystem::path& path, std::string_view line);

/// Hard link when possible, copy otherwise. Replaces an existing `to`.
void link_or_copy(const std::filesystem::path& from,
                  const std::filesystem::path& to);

/// Sorted regular files under `dir` whose extension equals `ext` (".txt").
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              std::string_view ext = {});

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

/// Current UTC time as 2026-01-02T03:04:05Z.
std::string utc_timestamp();

/// Exclusive advisory lock (flock) held for the lifetime of the object.
/// Released automatically if the process dies.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace loopmark

#endif  // LOOPMARK_FSUTIL_HPP_
