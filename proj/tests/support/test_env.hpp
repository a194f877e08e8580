#pragma once

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <unistd.h>
#include <vector>

#include "compass/backend.hpp"
#include "compass/trace_model.hpp"
#include "compass/util.hpp"

namespace compass::testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(COMPASS_SOURCE_DIR) / rel;
}

inline std::string read_source(const std::string& rel) { return util::read_file(source_path(rel)); }

inline trace::TraceTree minitrace_tree() {
  const auto spans = trace::parse_trace_file(read_source("fixtures/minitrace.json"), trace::TraceFormat::flat_json);
  return trace::build_trace_tree(spans);
}

inline std::map<std::string, std::string> t1_script() { return backend::parse_script(read_source("tests/golden/t1.script.json")); }

// Compares against a checked-in golden file. Set COMPASS_UPDATE_GOLDEN=1 to
// rewrite it instead.
inline void expect_golden(const std::string& rel, const std::string& actual) {
  const auto path = source_path(rel);
  if (std::getenv("COMPASS_UPDATE_GOLDEN")) {
    util::write_file_atomic(path, actual);
    return;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden file " << rel;
  EXPECT_EQ(util::read_file(path), actual) << "golden mismatch: " << rel;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("compass_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::permissions(path_, std::filesystem::perms::owner_all, std::filesystem::perm_options::add, ec);
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Scripted backend that remembers every request it served.
class RecordingBackend final : public backend::ChatBackend {
 public:
  explicit RecordingBackend(const std::map<std::string, std::string>& script) : inner_(script) {}

  backend::ChatResult chat_complete(const backend::ChatRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      requests.push_back(request);
    }
    return inner_.chat_complete(request);
  }
  std::string id() const override { return inner_.id(); }

  const backend::ChatRequest* find(const std::string& key) const {
    for (const auto& r : requests) {
      if (r.script_key() == key) return &r;
    }
    return nullptr;
  }

  std::vector<backend::ChatRequest> requests;

 private:
  backend::ScriptedBackend inner_;
  std::mutex mutex_;
};

}  // namespace compass::testing
