#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compass/embedding.hpp"
#include "compass/pipeline.hpp"

namespace compass::memory {

struct DigestItem {
  std::string error_type;  // taxonomy path
  std::string span_name;
  pipeline::Severity severity = pipeline::Severity::medium;
  double confidence = 0.0;

  bool operator==(const DigestItem&) const = default;
};

// One pipeline run over one trace. Re-analysing a trace appends a new entry
// with the next run number.
struct EpisodicEntry {
  std::string trace_id;
  int run = 0;
  std::int64_t created_at = 0;
  std::string status;
  std::vector<DigestItem> findings_digest;
  std::optional<double> aggregate_score;
  std::string summary;

  bool operator==(const EpisodicEntry&) const = default;
};

// A cross-trace error pattern promoted from episodic findings.
struct SemanticPattern {
  std::string pattern_id;
  std::string error_type;
  std::string pattern_text;
  std::size_t support_count = 0;  // distinct traces
  double mean_confidence = 0.0;
  embedding::Vector embedding;
  std::int64_t first_seen = 0;
  std::int64_t last_seen = 0;

  bool operator==(const SemanticPattern&) const = default;
};

// Append-only `episodic.jsonl` plus `semantic.jsonl` under one directory.
// Writers serialize on an flock'd lock file, so several processes may share
// a directory; readers take whatever complete lines exist.
class MemoryStore {
 public:
  explicit MemoryStore(std::filesystem::path dir);

  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path episodic_path() const { return dir_ / "episodic.jsonl"; }
  std::filesystem::path semantic_path() const { return dir_ / "semantic.jsonl"; }

  std::vector<EpisodicEntry> episodic() const;
  std::vector<SemanticPattern> semantic() const;

  // Assigns the run number, appends, and fsyncs. MemoryWriteError on I/O failure.
  EpisodicEntry append_episodic(EpisodicEntry entry);
  // Atomically replaces the semantic store.
  void write_semantic(const std::vector<SemanticPattern>& patterns);
  // Removes both stores.
  void purge();

 private:
  class WriteLock;

  std::filesystem::path dir_;
  std::mutex write_mutex_;
};

EpisodicEntry record_episodic(MemoryStore& store, const pipeline::AnalysisReport& report);
// Same, with an explicit timestamp instead of the report's last stage time.
EpisodicEntry record_episodic(MemoryStore& store, const pipeline::AnalysisReport& report,
                              std::int64_t created_at);

struct PromotionRules {
  std::size_t min_support = 3;
  double min_confidence = 0.7;
};

struct PromotionResult {
  std::vector<SemanticPattern> patterns;  // full semantic store after promotion
  bool deferred = false;
  std::vector<std::string> warnings;
};

// Groups episodic digests by error type; groups seen in >= min_support
// distinct traces with mean confidence >= min_confidence become patterns.
// Recomputed from the episodic log, so repeated runs are idempotent.
PromotionResult promote(MemoryStore& store, embedding::Embedder& embedder, const PromotionRules& rules = {});

enum class Source { episodic, semantic };
std::string_view to_string(Source source);

struct RetrievedItem {
  Source source = Source::semantic;
  std::string text;
  double similarity = 0.0;
};

struct MemoryContext {
  std::vector<RetrievedItem> retrieved;  // similarity descending, only rendered items
  std::string rendered_text;
  std::size_t budget_chars = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultRetrievalK = 5;
inline constexpr std::size_t kDefaultBudgetChars = 1500;

// Top-k semantic patterns by cosine similarity plus the latest episodic entry
// for `trace_id`. Whole items are dropped from the tail to fit the budget.
// Never writes to the store.
MemoryContext retrieve_context(const MemoryStore& store, embedding::Embedder& embedder,
                               std::string_view query_text, std::size_t k = kDefaultRetrievalK,
                               std::size_t budget_chars = kDefaultBudgetChars,
                               std::optional<std::string> trace_id = std::nullopt);

std::string render_episodic(const EpisodicEntry& entry);

}  // namespace compass::memory
