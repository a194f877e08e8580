// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code
// is non-zero when any requested criterion fails.
//
//   compass_acceptance [criterion ...]   (no arguments runs all)

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "compass/clustering.hpp"
#include "compass/evaluation.hpp"
#include "compass/fixtures.hpp"
#include "compass/memory.hpp"
#include "compass/pipeline.hpp"
#include "compass/report_io.hpp"
#include "compass/taxonomy.hpp"
#include "compass/trace_model.hpp"
#include "compass/util.hpp"
#include "support/eval_fixture.hpp"
#include "support/oracles.hpp"
#include "support/trace_gen.hpp"

namespace fs = std::filesystem;
using namespace compass;

namespace {

// Tolerances and budgets.
constexpr double kMetricTol = 1e-9;
constexpr double kPearsonExpected = 0.8;
constexpr double kPearsonTol = 1e-9;
constexpr double kMinAri = 0.99;
constexpr double kMinCoincidentProb = 0.99;
constexpr double kSoftThreshold = 0.6;
constexpr double kClosedLoopBudgetS = 10.0;
constexpr double kHdbscanBudgetS = 5.0;
constexpr int kRandomInstances = 1000;
constexpr int kOracleInstances = 500;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, int digits = 6) { return util::format_fixed(v, digits); }

fs::path source(const std::string& rel) { return fs::path(COMPASS_SOURCE_DIR) / rel; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name) : path_(fs::temp_directory_path() / ("compass_accept_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

int cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "compass");
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

std::vector<std::string> files_ending(const fs::path& dir, const std::string& suffix) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().string().ends_with(suffix)) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

Outcome closed_loop_oracle() {
  Outcome o;
  ScratchDir dir("closed_loop");
  const auto mapping = source("config/trail_mapping.json").string();
  const auto t0 = std::chrono::steady_clock::now();
  std::string out, err;
  int code = cli({"synth", "--seed", "1000", "--count", "20", "--faults", source("config/faults.example.json").string(),
                  "-m", mapping, "--oracle-script", "-o", (dir / "synth").string()},
                 &out, &err);
  o.check(code == 0, "synth exit " + std::to_string(code) + " " + err);
  auto traces = files_ending(dir / "synth", ".trace.json");
  o.check(traces.size() == 20, "expected 20 traces, got " + std::to_string(traces.size()));

  std::vector<std::string> analyze{"analyze", "--script", (dir / "synth/script.json").string(), "-o",
                                   (dir / "reports").string()};
  analyze.insert(analyze.end(), traces.begin(), traces.end());
  code = cli(analyze, &out, &err);
  o.check(code == 0, "analyze exit " + std::to_string(code) + " " + err);

  code = cli({"evaluate", (dir / "reports").string(), "-a", (dir / "synth/annotations.json").string(), "-m", mapping,
              "-o", (dir / "metrics").string()},
             &out, &err);
  o.check(code == 0, "evaluate exit " + std::to_string(code) + " " + err);
  const double elapsed = seconds_since(t0);
  if (code == 0) {
    const auto m = nlohmann::json::parse(util::read_file(dir / "metrics/metrics.json"));
    const double f1 = m["categorization_f1"], loc = m["localization_accuracy"], joint = m["joint_score"];
    o.check(f1 == 1.0 && loc == 1.0 && joint == 1.0, "metrics not exactly 1");
    o.note("F1=" + fmt(f1, 3) + " Loc=" + fmt(loc, 3) + " Joint=" + fmt(joint, 3) + " over " +
           std::to_string(m["ground_truth_count"].get<int>()) + " injected faults");
  }
  o.check(elapsed < kClosedLoopBudgetS, "runtime " + fmt(elapsed, 2) + "s");
  o.note("runtime " + fmt(elapsed, 2) + "s");
  return o;
}

Outcome metric_oracle_equivalence() {
  Outcome o;
  testing::MixedFixture fx;
  const auto gt = eval::load_ground_truth(fx.annotations, fx.mapping);
  const auto m = eval::evaluate_run(fx.reports, gt, fx.mapping);
  o.check(std::abs(m.categorization_f1 - testing::kMixedF1) <= kMetricTol, "mixed F1 " + fmt(m.categorization_f1, 12));
  o.check(std::abs(m.localization_accuracy - testing::kMixedLoc) <= kMetricTol,
          "mixed Loc " + fmt(m.localization_accuracy, 12));
  o.check(std::abs(m.joint_score - testing::kMixedJoint) <= kMetricTol, "mixed Joint " + fmt(m.joint_score, 12));
  o.note("mixed fixture F1/Loc/Joint = " + fmt(m.categorization_f1) + "/" + fmt(m.localization_accuracy) + "/" +
         fmt(m.joint_score));

  const std::vector<double> xs{1, 2, 3, 4};
  const std::vector<double> ys{1, 3, 2, 5};
  const auto rho = eval::pearson(xs, ys);
  o.check(rho && std::abs(*rho - kPearsonExpected) <= kPearsonTol,
          "pearson([1,2,3,4],[1,3,2,5]) = " + (rho ? fmt(*rho, 9) : std::string("undefined")) + ", expected " +
              fmt(kPearsonExpected, 1) + " +/- 1e-9");

  const std::vector<double> flat{2, 2, 2, 2};
  o.check(!eval::pearson(flat, ys).has_value() && !eval::pearson(xs, flat).has_value(),
          "zero variance did not return undefined");
  return o;
}

Outcome metric_dominance() {
  Outcome o;
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> n_errors(0, 10);
  std::uniform_int_distribution<int> n_traces(1, 3);
  std::uniform_int_distribution<int> span(0, 5);
  std::uniform_int_distribution<int> label(0, 3);
  int violations = 0;
  for (int round = 0; round < kRandomInstances; ++round) {
    eval::MatchResult match;
    const int traces = n_traces(rng);
    for (int t = 0; t < traces; ++t) {
      auto draw = [&] {
        std::vector<eval::AnnotatedError> v;
        for (int i = n_errors(rng); i > 0; --i) {
          v.push_back({"s" + std::to_string(span(rng)), std::string(1, static_cast<char>('A' + label(rng)))});
        }
        return v;
      };
      auto preds = draw();
      auto truths = draw();
      match.traces.push_back(eval::match_trace("t" + std::to_string(t), preds, truths));
    }
    const double f1 = eval::categorization_f1(match);
    const double loc = eval::localization_accuracy(match);
    const double joint = eval::joint_score(match);
    const bool ok = joint <= loc && f1 >= 0 && f1 <= 1 && loc >= 0 && loc <= 1 && joint >= 0 && joint <= 1;
    if (!ok) ++violations;
  }
  o.check(violations == 0, std::to_string(violations) + " violating instances");
  o.note(std::to_string(kRandomInstances) + " instances, " + std::to_string(violations) + " violations");
  return o;
}

Outcome hdbscan_correctness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  clustering::ClusterParams params;
  params.min_cluster_size = 5;

  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double h = 20.0 * std::sqrt(3.0) / 2.0;
  const double centers[3][2] = {{0.0, 0.0}, {20.0, 0.0}, {10.0, h}};
  std::vector<embedding::Vector> blobs;
  std::vector<int> truth;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 20; ++i) {
      blobs.push_back(embedding::Vector{{centers[c][0] + noise(rng), centers[c][1] + noise(rng)}});
      truth.push_back(c);
    }
  }
  const auto r = clustering::hdbscan(blobs, params);
  const double ari = clustering::adjusted_rand_index(r.labels, truth);
  o.check(r.n_clusters == 3, "three blobs gave " + std::to_string(r.n_clusters) + " clusters");
  o.check(ari >= kMinAri, "ARI " + fmt(ari, 4));
  o.note("blobs: " + std::to_string(r.n_clusters) + " clusters, ARI " + fmt(ari, 4));

  std::mt19937_64 orng(77);
  std::uniform_int_distribution<int> size(2, 12);
  std::uniform_int_distribution<int> mcs_dist(2, 4);
  std::uniform_int_distribution<int> ms_dist(1, 3);
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  std::uniform_int_distribution<int> grid(0, 3);
  int mismatches = 0;
  int exact = 0;
  for (int round = 0; round < kOracleInstances; ++round) {
    const auto n = static_cast<std::size_t>(size(orng));
    const bool on_grid = round % 3 == 2;
    std::vector<std::vector<double>> raw;
    std::vector<embedding::Vector> pts;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p = on_grid ? std::vector<double>{double(grid(orng)), double(grid(orng))}
                                      : std::vector<double>{coord(orng), coord(orng)};
      raw.push_back(p);
      pts.push_back(embedding::Vector{p});
    }
    clustering::ClusterParams p;
    p.min_cluster_size = static_cast<std::size_t>(mcs_dist(orng));
    p.min_samples = std::min(p.min_cluster_size, static_cast<std::size_t>(ms_dist(orng)));
    const auto got = clustering::hdbscan(pts, p);
    const auto want = testing::oracle_hdbscan(raw, p.min_cluster_size, p.min_samples);
    bool ok;
    if (want.optimal_selections == 1) {
      ok = got.labels == want.labels;
      ++exact;
    } else {
      const double s = testing::selection_stability(want, got.labels);
      ok = s >= 0 && std::abs(s - want.best_total) <= 1e-9 * std::max(1.0, want.best_total);
    }
    if (!ok) ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  o.note(std::to_string(kOracleInstances) + " oracle instances (" + std::to_string(exact) + " unique optimum), " +
         std::to_string(mismatches) + " mismatches");

  std::vector<embedding::Vector> few(4, embedding::Vector{{0.0, 0.0}});
  const auto small = clustering::hdbscan(few, params);
  o.check(std::all_of(small.labels.begin(), small.labels.end(), [](int l) { return l == clustering::kNoise; }),
          "4 points with min_cluster_size 5 not all noise");

  const double elapsed = seconds_since(t0);
  o.check(elapsed < kHdbscanBudgetS, "runtime " + fmt(elapsed, 2) + "s");
  o.note("runtime " + fmt(elapsed, 2) + "s");
  return o;
}

Outcome soft_assignment() {
  Outcome o;
  clustering::ClusterParams p;
  p.min_cluster_size = 2;
  p.soft_threshold = kSoftThreshold;

  clustering::ClusteringResult eq;
  eq.labels = {0, 1, clustering::kNoise};
  eq.probabilities = {1, 1, 0};
  eq.n_clusters = 2;
  eq.exemplars = {{0, {0}}, {1, {1}}};
  const std::vector<embedding::Vector> eq_pts{embedding::Vector{{-2.0, 0.0}}, embedding::Vector{{2.0, 0.0}},
                                              embedding::Vector{{0.0, 1.0}}};
  const auto eq_out = clustering::soft_assign_noise(eq_pts, eq, p);
  o.check(eq_out.labels[2] == clustering::kNoise, "equidistant point was assigned");
  o.note("equidistant point stays noise at threshold " + fmt(kSoftThreshold, 1));

  clustering::ClusteringResult co;
  co.labels = {0, 0, 1, 1, clustering::kNoise};
  co.probabilities = {1, 1, 1, 1, 0};
  co.n_clusters = 2;
  co.exemplars = {{0, {0}}, {1, {2}}};
  const std::vector<embedding::Vector> co_pts{embedding::Vector{{0.0, 0.0}}, embedding::Vector{{0.5, 0.0}},
                                              embedding::Vector{{10.0, 0.0}}, embedding::Vector{{10.5, 0.0}},
                                              embedding::Vector{{0.0, 0.0}}};
  const auto co_out = clustering::soft_assign_noise(co_pts, co, p);
  o.check(co_out.labels[4] == 0 && co_out.probabilities[4] >= kMinCoincidentProb,
          "coincident point label " + std::to_string(co_out.labels[4]) + " prob " + fmt(co_out.probabilities[4]));
  o.note("coincident point prob " + fmt(co_out.probabilities[4], 6));
  return o;
}

Outcome trace_model_properties() {
  Outcome o;
  std::mt19937_64 rng(8675309);
  int failures = 0;
  std::string first_failure;
  for (int round = 0; round < kRandomInstances; ++round) {
    const auto spans = testing::random_spans(rng);
    const auto tree = trace::build_trace_tree(spans);
    std::string why = testing::tree_violations(spans, tree);
    const auto doc = trace::serialize_outline(tree, trace::kMinTruncationLimit);
    if (doc.index.size() != spans.size()) why += "outline misses spans; ";
    for (const auto& [number, id] : doc.index) {
      const auto it = std::find_if(spans.begin(), spans.end(), [&](const auto& s) { return s.span_id == id; });
      if (it == spans.end() || tree.node(id).span != *it) why += "round trip broke at " + number + "; ";
    }
    if (trace::serialize_outline(trace::build_trace_tree(spans), trace::kMinTruncationLimit).text != doc.text) {
      why += "serialization not deterministic; ";
    }
    if (!why.empty()) {
      if (first_failure.empty()) first_failure = "round " + std::to_string(round) + ": " + why;
      ++failures;
    }
  }
  o.check(failures == 0, std::to_string(failures) + " failing span sets, first " + first_failure);
  o.note(std::to_string(kRandomInstances) + " fuzzed span sets, " + std::to_string(failures) + " failures");
  return o;
}

Outcome pipeline_determinism() {
  Outcome o;
  const auto golden = util::read_file(source("tests/golden/t1.report.json"));
  const auto spans =
      trace::parse_trace_file(util::read_file(source("fixtures/minitrace.json")), trace::TraceFormat::flat_json);
  const auto tree = trace::build_trace_tree(spans);
  const auto script = backend::parse_script(util::read_file(source("tests/golden/t1.script.json")));
  for (int run = 0; run < 3; ++run) {
    backend::ScriptedBackend backend(script);
    const auto text = pipeline::dump_report(pipeline::run_pipeline(tree, {backend, taxonomy::default_taxonomy()}).report);
    o.check(text == golden, "run " + std::to_string(run + 1) + " differs from golden");
  }

  // Through the CLI, with several copies of T1 analysed by 1 and by 4 workers.
  ScratchDir dir("determinism");
  std::vector<std::string> inputs;
  for (int i = 0; i < 6; ++i) {
    const auto p = dir / ("copy" + std::to_string(i) + ".json");
    fs::copy_file(source("fixtures/minitrace.json"), p);
    inputs.push_back(p.string());
  }
  for (const char* jobs : {"1", "4"}) {
    std::vector<std::string> args{"analyze", "--script", source("tests/golden/t1.script.json").string(), "-j", jobs,
                                  "-o", (dir / (std::string("out") + jobs)).string()};
    args.insert(args.end(), inputs.begin(), inputs.end());
    std::string out, err;
    const int code = cli(args, &out, &err);
    o.check(code == 0, std::string("analyze -j ") + jobs + " exit " + std::to_string(code));
    if (code == 0) {
      o.check(util::read_file(dir / (std::string("out") + jobs + "/T1.report.json")) == golden,
              std::string("-j ") + jobs + " report differs from golden");
    }
  }
  o.note("3 library runs and -j 1 / -j 4 CLI runs match the golden report");
  return o;
}

pipeline::AnalysisReport digest_report(const std::string& trace, const char* type, double confidence) {
  pipeline::AnalysisReport r;
  r.trace_id = trace;
  pipeline::ErrorFinding f;
  f.finding_id = "F1";
  f.span_name = "tool.search";
  f.error_type = taxonomy::resolve_error_type(taxonomy::default_taxonomy(), type);
  f.confidence = confidence;
  r.findings.push_back(f);
  return r;
}

Outcome memory_behavior() {
  Outcome o;
  ScratchDir dir("memory");
  memory::EpisodicEntry written;
  {
    memory::MemoryStore store(dir.path() / "mem");
    written = memory::record_episodic(store, digest_report("T1", "Rate Limit", 0.9), 5);
  }
  memory::MemoryStore fresh(dir.path() / "mem");
  const auto entries = fresh.episodic();
  o.check(entries.size() == 1 && entries[0] == written, "fresh store did not read the entry back");

  for (const char* t : {"T2", "T3", "T4"}) memory::record_episodic(fresh, digest_report(t, "Rate Limit", 0.8), 6);
  embedding::HashEmbedder embedder(64);
  const auto first = memory::promote(fresh, embedder);
  const auto bytes = util::read_file(fresh.semantic_path());
  const auto second = memory::promote(fresh, embedder);
  o.check(first.patterns == second.patterns && util::read_file(fresh.semantic_path()) == bytes,
          "promote is not idempotent");
  o.check(first.patterns.size() == 1, "expected 1 pattern, got " + std::to_string(first.patterns.size()));

  const auto spans =
      trace::parse_trace_file(util::read_file(source("fixtures/minitrace.json")), trace::TraceFormat::flat_json);
  const auto tree = trace::build_trace_tree(spans);
  backend::ScriptedBackend backend(backend::parse_script(util::read_file(source("tests/golden/t1.script.json"))));
  memory::MemoryStore empty(dir.path() / "empty");
  const pipeline::PipelineConfig disabled;
  const auto a = pipeline::dump_report(
      pipeline::run_pipeline(tree, {backend, taxonomy::default_taxonomy(), &empty, &embedder}, disabled).report);
  const auto b = pipeline::dump_report(
      pipeline::run_pipeline(tree, {backend, taxonomy::default_taxonomy(), &fresh, &embedder}, disabled).report);
  o.check(a == b, "memory-disabled reports depend on store contents");
  o.note("durable read-back, idempotent promotion (" + std::to_string(first.patterns.size()) +
         " pattern), disabled memory leaves reports unchanged");
  return o;
}

Outcome aggregate_monotonicity() {
  Outcome o;
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, 12);
  std::uniform_int_distribution<int> sev(0, 3);
  int violations = 0;
  for (int round = 0; round < kRandomInstances; ++round) {
    pipeline::QualityScorecard card;
    for (auto d : pipeline::kDimensions) card.scores[d] = unit(rng);
    std::vector<pipeline::ErrorFinding> findings(static_cast<std::size_t>(count(rng)));
    for (auto& f : findings) f.severity = static_cast<pipeline::Severity>(sev(rng));
    const double before = pipeline::aggregate_and_prioritize(card, findings).score;
    findings.emplace_back().severity = pipeline::Severity::critical;
    const double after = pipeline::aggregate_and_prioritize(card, findings).score;
    if (after > before) ++violations;
  }
  o.check(violations == 0, std::to_string(violations) + " increases");
  o.note(std::to_string(kRandomInstances) + " instances, " + std::to_string(violations) + " increases");
  return o;
}

Outcome taxonomy_totality() {
  Outcome o;
  const auto t = taxonomy::load_taxonomy("");
  o.check(t.categories().size() == 5, "built-in taxonomy has " + std::to_string(t.categories().size()) + " categories");
  try {
    const auto m = taxonomy::load_mapping(util::read_file(source("config/trail_mapping.json")), t);
    m.require_total();
    o.note("5 categories, " + std::to_string(t.leaves().size()) + " leaves, TRAIL mapping total onto " +
           std::to_string(m.external_labels().size()) + " labels");
  } catch (const Error& e) {
    o.check(false, std::string("TRAIL mapping: ") + e.what());
  }
  return o;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"closed_loop_oracle", closed_loop_oracle},
      {"metric_oracle_equivalence", metric_oracle_equivalence},
      {"metric_dominance", metric_dominance},
      {"hdbscan_correctness", hdbscan_correctness},
      {"soft_assignment", soft_assignment},
      {"trace_model_properties", trace_model_properties},
      {"pipeline_determinism", pipeline_determinism},
      {"memory_behavior", memory_behavior},
      {"aggregate_monotonicity", aggregate_monotonicity},
      {"taxonomy_totality", taxonomy_totality},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty()) {
    for (const auto& [name, fn] : criteria()) wanted.push_back(name);
  }
  int failed = 0;
  for (const auto& name : wanted) {
    const auto it = std::find_if(criteria().begin(), criteria().end(), [&](const auto& c) { return c.first == name; });
    if (it == criteria().end()) {
      std::cout << "FAIL " << name << ": unknown criterion\n";
      ++failed;
      continue;
    }
    Outcome outcome;
    try {
      outcome = it->second();
    } catch (const std::exception& e) {
      outcome.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (outcome.pass ? "PASS " : "FAIL ") << name << ": " << outcome.detail << "\n";
    if (!outcome.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
