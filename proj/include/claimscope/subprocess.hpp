// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace claimscope {

struct ProcessResult {
  int exit_code = -1;  // -1 when the process could not be started or was signalled
  std::string out;
  std::string err;
};

// Runs argv[0] (PATH lookup) with `input` on stdin and collects both output
// streams. Never throws for child failures; inspect exit_code.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input = {});

// Self-deleting scratch directory.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace claimscope
