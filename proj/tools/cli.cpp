#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "compass/clustering.hpp"
#include "compass/config.hpp"
#include "compass/error.hpp"
#include "compass/evaluation.hpp"
#include "compass/fixtures.hpp"
#include "compass/memory.hpp"
#include "compass/pipeline.hpp"
#include "compass/report_io.hpp"
#include "compass/trace_model.hpp"
#include "compass/util.hpp"

namespace compass::cli {
namespace fs = std::filesystem;

namespace {

// Flags shared by every command that reads the config file.
struct Common {
  std::string config_path;
};

config::CompassConfig load(const Common& common) {
  if (common.config_path.empty()) return config::parse_config("{}", fs::current_path());
  return config::load_config(common.config_path);
}

// Report files named on the command line, plus *.report.json inside any
// directory argument (sorted by name).
std::vector<fs::path> expand_reports(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(in)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.ends_with(".report.json")) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

std::vector<pipeline::AnalysisReport> read_reports(const std::vector<fs::path>& paths, const taxonomy::Taxonomy& tax) {
  std::vector<pipeline::AnalysisReport> reports;
  for (const auto& p : paths) {
    try {
      reports.push_back(pipeline::parse_report(util::read_file(p), &tax));
    } catch (const Error& e) {
      throw InputError(p.string() + ": " + e.what());
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  Common common;
  std::vector<std::string> traces;
  std::string out_dir = "reports";
  std::string format = "auto";
  std::string script;
  int jobs = 1;
  bool markdown = false;
  std::optional<bool> memory;
  std::string memory_dir;
};

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  auto cfg = load(args.common);
  if (!args.script.empty()) {
    cfg.backend.mode = config::BackendMode::scripted;
    if (!fs::is_regular_file(args.script)) throw ConfigError("script file not found: " + args.script);
    cfg.backend.script = args.script;
  }
  if (args.memory) cfg.memory.enabled = cfg.pipeline.memory_enabled = *args.memory;
  if (!args.memory_dir.empty()) cfg.memory.dir = args.memory_dir;
  std::optional<trace::TraceFormat> format;
  if (args.format != "auto") {
    format = trace::parse_trace_format(args.format);
    if (!format) throw ConfigError("unknown trace format '" + args.format + "'");
  }

  const auto tax = config::load_configured_taxonomy(cfg);
  auto backend = config::make_backend(cfg);
  std::unique_ptr<embedding::Embedder> embedder;
  std::unique_ptr<memory::MemoryStore> store;
  if (cfg.memory.enabled) {
    embedder = config::make_embedder(cfg);
    store = std::make_unique<memory::MemoryStore>(cfg.memory.dir);
  }
  fs::create_directories(args.out_dir);

  struct Outcome {
    std::string log;
    bool failed = false;
    std::string trace_id;
    std::string report_json;
    std::string report_md;
  };
  std::vector<Outcome> outcomes(args.traces.size());
  std::atomic<std::size_t> next{0};
  const pipeline::PipelineDeps deps{*backend, tax, store.get(), embedder.get()};

  auto work = [&] {
    for (auto i = next++; i < args.traces.size(); i = next++) {
      auto& o = outcomes[i];
      const auto& path = args.traces[i];
      try {
        const auto bytes = util::read_file(path);
        const auto spans = trace::parse_trace_file(bytes, format.value_or(trace::detect_trace_format(bytes)));
        const auto tree = trace::build_trace_tree(spans);
        auto result = pipeline::run_pipeline(tree, deps, cfg.pipeline);
        const auto& report = result.report;
        const fs::path base = fs::path(args.out_dir) / report.trace_id;
        o.trace_id = report.trace_id;
        o.report_json = pipeline::dump_report(report);
        if (args.markdown) o.report_md = pipeline::render_markdown(report);
        for (const auto& d : result.diagnostics) o.log += "warning: " + path + ": " + d + "\n";
        if (report.completed()) {
          o.log += "ok: " + path + " -> " + base.string() + ".report.json\n";
        } else {
          o.failed = true;
          o.log += "failed: " + path + ": " + report.status + ": " + report.error.value_or("") + "\n";
        }
      } catch (const Error& e) {
        o.failed = true;
        o.log += "error: " + path + ": " + e.what() + "\n";
      }
    }
  };
  const auto jobs = static_cast<std::size_t>(std::max(1, args.jobs));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, args.traces.size()); ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  // Written in input order so that a repeated trace id resolves the same way
  // for every -j.
  std::map<std::string, std::size_t> written;
  bool any_failed = false;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.report_json.empty()) {
      if (auto [it, fresh] = written.emplace(o.trace_id, i); !fresh) {
        o.log += "warning: " + args.traces[i] + ": trace id " + o.trace_id + " also in " + args.traces[it->second] +
                 "; report overwritten\n";
        it->second = i;
      }
      const auto base = (fs::path(args.out_dir) / o.trace_id).string();
      try {
        util::write_file_atomic(base + ".report.json", o.report_json);
        if (args.markdown) util::write_file_atomic(base + ".report.md", o.report_md);
      } catch (const Error& e) {
        o.failed = true;
        o.log += "error: " + args.traces[i] + ": " + e.what() + "\n";
      }
    }
    (o.failed ? err : out) << o.log;
    any_failed = any_failed || o.failed;
  }
  return any_failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// cluster

struct ClusterArgs {
  Common common;
  std::vector<std::string> inputs;
  std::string out_dir = ".";
};

int cmd_cluster(const ClusterArgs& args, std::ostream& out, std::ostream&) {
  const auto cfg = load(args.common);
  const auto tax = config::load_configured_taxonomy(cfg);
  const auto paths = expand_reports(args.inputs);
  if (paths.empty()) throw InputError("no report files found");
  const auto reports = read_reports(paths, tax);
  auto embedder = config::make_embedder(cfg);
  const auto run = clustering::cluster_reports(reports, *embedder, cfg.clustering);

  std::size_t noise = 0;
  for (auto l : run.result.labels) noise += l == clustering::kNoise ? 1 : 0;
  fs::create_directories(args.out_dir);
  util::write_file_atomic(fs::path(args.out_dir) / "issues.json", clustering::dump_issues(run.issues));
  util::write_file_atomic(fs::path(args.out_dir) / "issues.md", clustering::render_triage_markdown(run.issues, noise));
  if (run.order.empty()) out << "notice: no findings in " << reports.size() << " reports; no issues emitted\n";
  out << run.issues.size() << " issues from " << run.order.size() << " findings (" << noise
      << " unclustered) -> " << (fs::path(args.out_dir) / "issues.json").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  Common common;
  std::vector<std::string> reports;
  std::string annotations;
  std::string mapping;
  std::string out_dir;
};

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream&) {
  auto cfg = load(args.common);
  if (!args.mapping.empty()) {
    if (!fs::is_regular_file(args.mapping)) throw ConfigError("mapping file not found: " + args.mapping);
    cfg.mapping_path = args.mapping;
  }
  const auto tax = config::load_configured_taxonomy(cfg);
  const auto mapping = config::load_configured_mapping(cfg, tax);
  const auto paths = expand_reports(args.reports);
  if (paths.empty()) throw InputError("no report files found");
  const auto reports = read_reports(paths, tax);
  const auto gt = eval::load_ground_truth(util::read_file(args.annotations), mapping);
  const auto metrics = eval::evaluate_run(reports, gt, mapping);
  const auto table = eval::render_metrics_table(metrics);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    util::write_file_atomic(fs::path(args.out_dir) / "metrics.json", eval::metrics_to_json(metrics).dump(2) + "\n");
    util::write_file_atomic(fs::path(args.out_dir) / "metrics.txt", table);
  }
  out << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// memory

struct MemoryArgs {
  Common common;
  std::string dir;
  std::string trace_id;
  bool yes = false;
};

memory::MemoryStore open_store(const MemoryArgs& args, config::CompassConfig& cfg) {
  cfg = load(args.common);
  return memory::MemoryStore(args.dir.empty() ? cfg.memory.dir : fs::path(args.dir));
}

int cmd_memory_ls(const MemoryArgs& args, std::ostream& out) {
  config::CompassConfig cfg;
  auto store = open_store(args, cfg);
  const auto episodic = store.episodic();
  const auto semantic = store.semantic();
  out << "episodic entries: " << episodic.size() << "\n";
  for (const auto& e : episodic) {
    out << "  " << e.trace_id << " run " << e.run << " " << e.status << " findings=" << e.findings_digest.size()
        << "\n";
  }
  out << "semantic patterns: " << semantic.size() << "\n";
  for (const auto& p : semantic) {
    out << "  " << p.pattern_id << " " << p.error_type << " support=" << p.support_count
        << " confidence=" << util::format_fixed(p.mean_confidence, 3) << "\n";
  }
  return kExitOk;
}

int cmd_memory_show(const MemoryArgs& args, std::ostream& out, std::ostream& err) {
  config::CompassConfig cfg;
  auto store = open_store(args, cfg);
  bool found = false;
  for (const auto& e : store.episodic()) {
    if (e.trace_id != args.trace_id) continue;
    found = true;
    out << memory::render_episodic(e) << "\n";
  }
  for (const auto& p : store.semantic()) {
    if (p.pattern_id != args.trace_id) continue;
    found = true;
    out << p.pattern_id << ": " << p.pattern_text << "\n";
  }
  if (!found) {
    err << "no memory entries for '" << args.trace_id << "'\n";
    return kExitUsage;
  }
  return kExitOk;
}

int cmd_memory_promote(const MemoryArgs& args, std::ostream& out, std::ostream& err) {
  config::CompassConfig cfg;
  auto store = open_store(args, cfg);
  auto embedder = config::make_embedder(cfg);
  const auto result = memory::promote(store, *embedder, cfg.memory.promotion);
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  out << (result.deferred ? "promotion deferred; " : "") << result.patterns.size() << " semantic patterns\n";
  return kExitOk;
}

int cmd_memory_purge(const MemoryArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.yes) {
    err << "refusing to purge without --yes\n";
    return kExitUsage;
  }
  config::CompassConfig cfg;
  auto store = open_store(args, cfg);
  store.purge();
  out << "purged " << store.dir().string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  std::uint64_t seed = 1;
  int count = 1;
  fixtures::TraceShape shape;
  std::string faults;
  std::string mapping;
  std::string out_dir = "synth";
  bool oracle_script = false;
};

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream&) {
  auto cfg = load(args.common);
  if (!args.mapping.empty()) {
    if (!fs::is_regular_file(args.mapping)) throw ConfigError("mapping file not found: " + args.mapping);
    cfg.mapping_path = args.mapping;
  }
  const auto tax = config::load_configured_taxonomy(cfg);
  const auto mapping = config::load_configured_mapping(cfg, tax);
  std::vector<fixtures::FaultSpec> faults;
  if (!args.faults.empty()) faults = fixtures::load_faults(util::read_file(args.faults), tax);

  fs::create_directories(args.out_dir);
  std::vector<fixtures::GeneratedTrace> traces;
  nlohmann::json script = nlohmann::json::object();
  for (int i = 0; i < args.count; ++i) {
    auto g = fixtures::generate_trace(args.seed + static_cast<std::uint64_t>(i), args.shape, faults, mapping);
    util::write_file_atomic(fs::path(args.out_dir) / (g.trace_id + ".trace.json"), g.trace_json());
    if (args.oracle_script) {
      for (auto& [key, text] : fixtures::build_oracle_script(g, cfg.pipeline.truncation_limit)) script[key] = text;
    }
    traces.push_back(std::move(g));
  }
  util::write_file_atomic(fs::path(args.out_dir) / "annotations.json", fixtures::annotations_json(traces));
  if (args.oracle_script) util::write_file_atomic(fs::path(args.out_dir) / "script.json", script.dump(2) + "\n");
  out << "wrote " << traces.size() << " traces to " << args.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace triage: analyze agent traces, cluster recurring errors, evaluate against annotations"};
  app.name("compass");
  app.require_subcommand(1);

  auto add_config = [](CLI::App* cmd, Common& common) {
    cmd->add_option("-c,--config", common.config_path, "Config JSON file")->check(CLI::ExistingFile);
  };

  AnalyzeArgs analyze;
  auto* a = app.add_subcommand("analyze", "Run the four-stage pipeline over trace files");
  add_config(a, analyze.common);
  a->add_option("traces", analyze.traces, "Trace files")->required();
  a->add_option("-o,--out", analyze.out_dir, "Report directory")->capture_default_str();
  a->add_option("--format", analyze.format, "auto, flat_json or otlp_json")->capture_default_str();
  a->add_option("--script", analyze.script, "Scripted backend responses (overrides config)");
  a->add_option("-j,--jobs", analyze.jobs, "Traces analysed in parallel")->check(CLI::Range(1, 256));
  a->add_flag("--markdown", analyze.markdown, "Also write <trace_id>.report.md");
  a->add_flag_function(
      "--memory,!--no-memory", [&](std::int64_t n) { analyze.memory = n > 0; }, "Enable or disable memory");
  a->add_option("--memory-dir", analyze.memory_dir, "Memory directory (overrides config)");

  ClusterArgs cluster;
  auto* c = app.add_subcommand("cluster", "Cluster findings across reports into issues");
  add_config(c, cluster.common);
  c->add_option("inputs", cluster.inputs, "Report files or directories")->required();
  c->add_option("-o,--out", cluster.out_dir, "Output directory for issues.json and issues.md")->capture_default_str();

  EvaluateArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "Score reports against annotated ground truth");
  add_config(e, evaluate.common);
  e->add_option("reports", evaluate.reports, "Report files or directories")->required();
  e->add_option("-a,--annotations", evaluate.annotations, "Annotation JSON")->required()->check(CLI::ExistingFile);
  e->add_option("-m,--mapping", evaluate.mapping, "Taxonomy mapping JSON (overrides config)");
  e->add_option("-o,--out", evaluate.out_dir, "Directory for metrics.json and metrics.txt");

  MemoryArgs mem;
  auto* m = app.add_subcommand("memory", "Inspect and maintain the memory stores");
  m->require_subcommand(1);
  auto add_mem = [&](CLI::App* cmd) {
    add_config(cmd, mem.common);
    cmd->add_option("--dir", mem.dir, "Memory directory (overrides config)");
  };
  auto* m_ls = m->add_subcommand("ls", "List episodic entries and semantic patterns");
  add_mem(m_ls);
  auto* m_show = m->add_subcommand("show", "Show entries for a trace id or pattern id");
  add_mem(m_show);
  m_show->add_option("id", mem.trace_id, "Trace id or pattern id")->required();
  auto* m_promote = m->add_subcommand("promote", "Promote recurring episodic findings to semantic patterns");
  add_mem(m_promote);
  auto* m_purge = m->add_subcommand("purge", "Delete both stores");
  add_mem(m_purge);
  m_purge->add_flag("--yes", mem.yes, "Confirm deletion");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic traces with injected faults");
  add_config(s, synth.common);
  s->add_option("--seed", synth.seed, "First seed")->capture_default_str();
  s->add_option("--count", synth.count, "Number of traces (seeds seed..seed+count-1)")->check(CLI::Range(1, 100000));
  s->add_option("--depth", synth.shape.depth, "Span tree depth")->check(CLI::Range(1, 64))->capture_default_str();
  s->add_option("--fanout", synth.shape.fanout, "Children per span")->check(CLI::Range(1, 1000))->capture_default_str();
  s->add_option("--tool-calls", synth.shape.tool_calls, "Tool spans")->check(CLI::Range(0, 100000))->capture_default_str();
  s->add_option("--faults", synth.faults, "Fault specs JSON")->check(CLI::ExistingFile);
  s->add_option("-m,--mapping", synth.mapping, "Taxonomy mapping JSON for annotation labels");
  s->add_option("-o,--out", synth.out_dir, "Output directory")->capture_default_str();
  s->add_flag("--oracle-script", synth.oracle_script, "Also write script.json reproducing the injected faults");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*a) return cmd_analyze(analyze, out, err);
    if (*c) return cmd_cluster(cluster, out, err);
    if (*e) return cmd_evaluate(evaluate, out, err);
    if (*m_ls) return cmd_memory_ls(mem, out);
    if (*m_show) return cmd_memory_show(mem, out, err);
    if (*m_promote) return cmd_memory_promote(mem, out, err);
    if (*m_purge) return cmd_memory_purge(mem, out, err);
    if (*s) return cmd_synth(synth, out, err);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace compass::cli
