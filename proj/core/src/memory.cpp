#include "compass/memory.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::memory {

using nlohmann::json;

namespace {

std::string errno_text() { return std::strerror(errno); }

json entry_to_json(const EpisodicEntry& e) {
  json digest = json::array();
  for (const auto& d : e.findings_digest) {
    digest.push_back(json{{"error_type", d.error_type},
                          {"span_name", d.span_name},
                          {"severity", pipeline::to_string(d.severity)},
                          {"confidence", d.confidence}});
  }
  return json{{"trace_id", e.trace_id},
              {"run", e.run},
              {"created_at", e.created_at},
              {"status", e.status},
              {"findings_digest", digest},
              {"aggregate_score", e.aggregate_score ? json(*e.aggregate_score) : json(nullptr)},
              {"summary", e.summary}};
}

EpisodicEntry entry_from_json(const json& j) {
  EpisodicEntry e;
  e.trace_id = j.at("trace_id").get<std::string>();
  e.run = j.value("run", 0);
  e.created_at = j.value("created_at", std::int64_t{0});
  e.status = j.value("status", std::string("completed"));
  for (const auto& d : j.value("findings_digest", json::array())) {
    DigestItem item;
    item.error_type = d.at("error_type").get<std::string>();
    item.span_name = d.value("span_name", std::string{});
    item.severity = pipeline::parse_severity(d.value("severity", std::string("medium"))).value_or(pipeline::Severity::medium);
    item.confidence = d.value("confidence", 0.0);
    e.findings_digest.push_back(std::move(item));
  }
  if (auto a = j.find("aggregate_score"); a != j.end() && a->is_number()) e.aggregate_score = a->get<double>();
  e.summary = j.value("summary", std::string{});
  return e;
}

json pattern_to_json(const SemanticPattern& p) {
  return json{{"pattern_id", p.pattern_id},
              {"error_type", p.error_type},
              {"pattern_text", p.pattern_text},
              {"support_count", p.support_count},
              {"mean_confidence", p.mean_confidence},
              {"embedding", p.embedding.values},
              {"first_seen", p.first_seen},
              {"last_seen", p.last_seen}};
}

SemanticPattern pattern_from_json(const json& j) {
  SemanticPattern p;
  p.pattern_id = j.at("pattern_id").get<std::string>();
  p.error_type = j.at("error_type").get<std::string>();
  p.pattern_text = j.value("pattern_text", std::string{});
  p.support_count = j.value("support_count", std::size_t{0});
  p.mean_confidence = j.value("mean_confidence", 0.0);
  p.embedding.values = j.value("embedding", std::vector<double>{});
  p.first_seen = j.value("first_seen", std::int64_t{0});
  p.last_seen = j.value("last_seen", std::int64_t{0});
  return p;
}

// Complete lines only: a trailing line without '\n' may be a write in
// progress from another process.
template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;
    std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what(), pos);
    }
  }
}

}  // namespace

class MemoryStore::WriteLock {
 public:
  explicit WriteLock(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw MemoryWriteError("cannot create memory directory " + dir.string() + ": " + ec.message());
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw MemoryWriteError("cannot open lock file " + path.string() + ": " + errno_text());
    if (::flock(fd_, LOCK_EX) != 0) {
      const auto msg = errno_text();
      ::close(fd_);
      throw MemoryWriteError("cannot lock " + path.string() + ": " + msg);
    }
  }
  ~WriteLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WriteLock(const WriteLock&) = delete;
  WriteLock& operator=(const WriteLock&) = delete;

 private:
  int fd_ = -1;
};

MemoryStore::MemoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::vector<EpisodicEntry> MemoryStore::episodic() const {
  std::vector<EpisodicEntry> out;
  for_each_line(episodic_path(), [&](const json& j) { out.push_back(entry_from_json(j)); });
  return out;
}

std::vector<SemanticPattern> MemoryStore::semantic() const {
  std::vector<SemanticPattern> out;
  for_each_line(semantic_path(), [&](const json& j) { out.push_back(pattern_from_json(j)); });
  return out;
}

EpisodicEntry MemoryStore::append_episodic(EpisodicEntry entry) {
  std::lock_guard guard(write_mutex_);
  WriteLock lock(dir_);
  int last_run = 0;
  for (const auto& e : episodic()) {
    if (e.trace_id == entry.trace_id) last_run = std::max(last_run, e.run);
  }
  entry.run = last_run + 1;
  const auto line = entry_to_json(entry).dump() + "\n";

  const auto path = episodic_path();
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw MemoryWriteError("cannot open " + path.string() + ": " + errno_text());
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const auto msg = errno_text();
      ::close(fd);
      throw MemoryWriteError("cannot append to " + path.string() + ": " + msg);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const auto msg = errno_text();
    ::close(fd);
    throw MemoryWriteError("cannot sync " + path.string() + ": " + msg);
  }
  ::close(fd);
  return entry;
}

void MemoryStore::write_semantic(const std::vector<SemanticPattern>& patterns) {
  std::lock_guard guard(write_mutex_);
  WriteLock lock(dir_);
  std::string body;
  for (const auto& p : patterns) body += pattern_to_json(p).dump() + "\n";
  try {
    util::write_file_atomic(semantic_path(), body);
  } catch (const Error& e) {
    throw MemoryWriteError(e.what());
  }
}

void MemoryStore::purge() {
  std::lock_guard guard(write_mutex_);
  WriteLock lock(dir_);
  std::error_code ec;
  std::filesystem::remove(episodic_path(), ec);
  if (ec) throw MemoryWriteError("cannot remove " + episodic_path().string() + ": " + ec.message());
  std::filesystem::remove(semantic_path(), ec);
  if (ec) throw MemoryWriteError("cannot remove " + semantic_path().string() + ": " + ec.message());
}

EpisodicEntry record_episodic(MemoryStore& store, const pipeline::AnalysisReport& report) {
  std::int64_t created_at = 0;
  if (!report.metadata.stages.empty()) created_at = report.metadata.stages.back().finished_at;
  return record_episodic(store, report, created_at);
}

EpisodicEntry record_episodic(MemoryStore& store, const pipeline::AnalysisReport& report, std::int64_t created_at) {
  EpisodicEntry entry;
  entry.trace_id = report.trace_id;
  entry.created_at = created_at;
  entry.status = report.status;
  for (const auto& f : report.findings) {
    entry.findings_digest.push_back({f.error_type.path, f.span_name, f.severity, f.confidence});
  }
  entry.aggregate_score = report.aggregate_score;
  entry.summary = report.summary;
  return store.append_episodic(std::move(entry));
}

namespace {

struct Group {
  std::set<std::string> traces;
  std::map<std::string, std::size_t> span_counts;
  double confidence_sum = 0.0;
  std::size_t count = 0;
  std::int64_t first_seen = 0;
  std::int64_t last_seen = 0;
};

std::string pattern_text(const std::string& error_type, const Group& g) {
  // Most frequent span names, ties by name.
  std::vector<std::pair<std::size_t, std::string>> spans;
  for (const auto& [name, n] : g.span_counts) spans.emplace_back(n, name);
  std::stable_sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::string where;
  for (std::size_t i = 0; i < spans.size() && i < 3; ++i) where += (i ? ", " : "") + spans[i].second;
  return "Recurring " + error_type + " in " + std::to_string(g.traces.size()) + " traces (mean confidence " +
         util::format_fixed(g.confidence_sum / static_cast<double>(g.count), 2) + "), typically at spans: " + where;
}

}  // namespace

PromotionResult promote(MemoryStore& store, embedding::Embedder& embedder, const PromotionRules& rules) {
  PromotionResult result;
  std::map<std::string, Group> groups;
  for (const auto& entry : store.episodic()) {
    for (const auto& d : entry.findings_digest) {
      auto& g = groups[d.error_type];
      if (g.count == 0) {
        g.first_seen = g.last_seen = entry.created_at;
      } else {
        g.first_seen = std::min(g.first_seen, entry.created_at);
        g.last_seen = std::max(g.last_seen, entry.created_at);
      }
      g.traces.insert(entry.trace_id);
      ++g.span_counts[d.span_name];
      g.confidence_sum += d.confidence;
      ++g.count;
    }
  }

  auto existing = store.semantic();
  std::map<std::string, SemanticPattern> by_id;
  for (auto& p : existing) by_id.emplace(p.pattern_id, std::move(p));

  for (const auto& [type, g] : groups) {
    const double mean = g.confidence_sum / static_cast<double>(g.count);
    if (g.traces.size() < rules.min_support || mean < rules.min_confidence) continue;
    const auto id = "PAT-" + util::to_hex(util::fnv1a64(type));
    SemanticPattern p;
    p.pattern_id = id;
    p.error_type = type;
    p.pattern_text = pattern_text(type, g);
    p.support_count = g.traces.size();
    p.mean_confidence = mean;
    p.first_seen = g.first_seen;
    p.last_seen = g.last_seen;
    if (auto it = by_id.find(id); it != by_id.end()) {
      p.support_count = std::max(p.support_count, it->second.support_count);
      p.first_seen = std::min(p.first_seen, it->second.first_seen);
      p.last_seen = std::max(p.last_seen, it->second.last_seen);
    }
    try {
      p.embedding = embedder.embed(p.pattern_text);
    } catch (const EmbeddingUnavailableError& e) {
      result.deferred = true;
      result.warnings.push_back(std::string("promotion deferred: ") + e.what());
      result.patterns = store.semantic();
      return result;
    }
    by_id[id] = std::move(p);
  }

  for (auto& [id, p] : by_id) result.patterns.push_back(p);
  if (result.patterns != store.semantic()) store.write_semantic(result.patterns);
  return result;
}

std::string_view to_string(Source source) { return source == Source::episodic ? "episodic" : "semantic"; }

std::string render_episodic(const EpisodicEntry& e) {
  std::string out = "Previous analysis of trace " + e.trace_id + " (run " + std::to_string(e.run) + ", " + e.status;
  if (e.aggregate_score) out += ", aggregate " + util::format_fixed(*e.aggregate_score, 2);
  out += "): ";
  if (e.findings_digest.empty()) {
    out += "no errors found";
  } else {
    for (std::size_t i = 0; i < e.findings_digest.size(); ++i) {
      const auto& d = e.findings_digest[i];
      out += (i ? "; " : "") + d.error_type + " at " + d.span_name + " (" + std::string(pipeline::to_string(d.severity)) + ")";
    }
  }
  if (!e.summary.empty()) out += ". Summary: " + e.summary;
  return util::collapse_spaces(out);
}

MemoryContext retrieve_context(const MemoryStore& store, embedding::Embedder& embedder, std::string_view query_text,
                               std::size_t k, std::size_t budget_chars, std::optional<std::string> trace_id) {
  MemoryContext ctx;
  ctx.budget_chars = budget_chars;

  auto patterns = store.semantic();
  std::optional<EpisodicEntry> latest;
  if (trace_id) {
    for (auto& e : store.episodic()) {
      if (e.trace_id == *trace_id && (!latest || e.run >= latest->run)) latest = std::move(e);
    }
  }
  if (patterns.empty() && !latest) return ctx;

  std::vector<RetrievedItem> items;
  try {
    const auto query = embedder.embed(query_text);
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      if (patterns[i].embedding.dim() != query.dim()) {
        ctx.warnings.push_back("pattern " + patterns[i].pattern_id + " has a different embedding dimension; skipped");
        continue;
      }
      ranked.emplace_back(embedding::cosine(query, patterns[i].embedding), i);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
      const auto& p = patterns[ranked[i].second];
      items.push_back({Source::semantic, p.pattern_text, ranked[i].first});
    }
    if (latest) {
      const auto text = render_episodic(*latest);
      double sim = 0.0;
      try {
        sim = embedding::cosine(query, embedder.embed(text));
      } catch (const ZeroVectorError&) {
      }
      items.push_back({Source::episodic, text, sim});
    }
  } catch (const EmbeddingUnavailableError& e) {
    ctx.warnings.push_back(std::string("memory retrieval skipped: ") + e.what());
    return ctx;
  } catch (const ZeroVectorError&) {
    ctx.warnings.push_back("memory retrieval skipped: query has no tokens");
    return ctx;
  }
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.similarity > b.similarity; });

  for (auto& item : items) {
    std::string line = "- [" + std::string(to_string(item.source)) + "] " + item.text + "\n";
    if (ctx.rendered_text.size() + line.size() > budget_chars) break;
    ctx.rendered_text += line;
    ctx.retrieved.push_back(std::move(item));
  }
  return ctx;
}

}  // namespace compass::memory
