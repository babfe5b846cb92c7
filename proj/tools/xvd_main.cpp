#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "manifest.hpp"
#include "xvd/annotation_io.hpp"
#include "xvd/corpus.hpp"
#include "xvd/distill.hpp"
#include "xvd/eval.hpp"
#include "xvd/joint_loss.hpp"
#include "xvd/prompt_io.hpp"
#include "xvd/prompt_pipeline.hpp"
#include "xvd/segmentation.hpp"
#include "xvd/server.hpp"
#include "xvd/store.hpp"
#include "xvd/tagseq.hpp"

#ifndef XVD_VERSION
#define XVD_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kFindings = 1, kUsage = 2, kIo = 3, kInternal = 4 };

struct Run {
  xvd::cli::RunManifest manifest;
  std::string manifest_path;

  std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw xvd::Error(xvd::ErrorKind::Io, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    manifest.add_input(path, text);
    return text;
  }

  void write(const std::string& path, const std::string& content) {
    manifest.add_output(path, content);
    if (path == "-" || path.empty()) {
      std::cout << content;
      std::cout.flush();
      return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << content) || !out.flush()) throw xvd::Error(xvd::ErrorKind::Io, "cannot write " + path);
  }

  // Manifest goes to --manifest, else next to the first file output, else to stderr as one line.
  void finish() {
    std::string target = manifest_path;
    if (target.empty()) {
      for (const auto& [path, digest] : manifest.outputs)
        if (path != "-" && !path.empty()) {
          target = path + ".manifest.json";
          break;
        }
    }
    if (target.empty()) {
      std::cerr << "manifest: " << manifest.to_json().dump() << "\n";
      return;
    }
    std::ofstream out(target, std::ios::binary);
    if (!out || !(out << manifest.to_json().dump(2) << "\n")) throw xvd::Error(xvd::ErrorKind::Io, "cannot write " + target);
  }
};

// Expands directories to their *.json files in name order.
std::vector<std::string> expand_paths(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<xvd::VideoAnnotation> load_annotations(Run& run, const std::vector<std::string>& paths) {
  std::vector<xvd::VideoAnnotation> out;
  for (const auto& p : expand_paths(paths)) {
    try {
      out.push_back(xvd::parse_annotation(run.read(p)));
    } catch (const xvd::Error& e) {
      if (e.kind == xvd::ErrorKind::Io) throw;
      throw xvd::Error(xvd::ErrorKind::Malformed, p + ": " + e.what());
    }
  }
  return out;
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

json trace_to_json(const xvd::ReasoningTrace& t) {
  json blocks = json::array();
  for (const auto& b : t.evidence) {
    json j;
    if (b.categories) {
      json cats = json::array();
      for (auto c : b.categories->items()) cats.push_back(std::string(xvd::to_string(c)));
      j["defect_cate"] = cats;
    } else {
      j["defect_cate"] = nullptr;
    }
    j["timestamp"] = b.timestamp ? json(b.timestamp->raw) : json(nullptr);
    j["explanation"] = b.explanation;
    j["located_frame"] = b.located_frame ? json(*b.located_frame) : json(nullptr);
    if (b.points) {
      json pts = json::array();
      for (const auto& p : *b.points) pts.push_back({p.x, p.y});
      j["point_2d"] = pts;
    } else {
      j["point_2d"] = nullptr;
    }
    blocks.push_back(j);
  }
  return {{"think", t.think}, {"evidence", blocks}, {"answer", std::string(xvd::to_string(t.answer))}};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---- cluster

struct ClusterOpts {
  std::string embeddings, coords, out = "-", report;
  int k = 80, top_m = 30;
  double coverage = 0.89;
  std::uint64_t seed = 0;
};

int cmd_cluster(Run& run, const ClusterOpts& o) {
  run.manifest.seed = o.seed;
  run.manifest.config = {{"k", o.k}, {"top_m", o.top_m}, {"coverage", o.coverage}};
  run.read(o.embeddings);
  Eigen::MatrixXd vectors = xvd::read_embeddings_file(o.embeddings);
  xvd::Reduction red;
  if (!o.coords.empty()) {
    run.read(o.coords);
    red = xvd::PrecomputedReducer(xvd::read_embeddings_file(o.coords)).reduce(vectors);
  } else {
    red = xvd::reduce_embeddings(vectors);
  }
  for (const auto& w : red.warnings) std::cerr << "warning: " << w << "\n";
  const auto km = xvd::kmeans(red.coords, o.k, o.seed);
  const auto top = xvd::select_top_clusters(km.assignments, o.top_m, o.coverage);
  if (top.warning) std::cerr << "warning: " << *top.warning << "\n";

  std::string tsv = "index\tcluster_id\tx\ty\tz\n";
  for (std::size_t i = 0; i < km.assignments.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    tsv += std::to_string(i) + "\t" + std::to_string(km.assignments[i]) + "\t" + fmt(red.coords(r, 0)) + "\t" +
           fmt(red.coords(r, 1)) + "\t" + fmt(red.coords(r, 2)) + "\n";
  }
  json clusters = json::array();
  for (const auto& c : top.clusters) clusters.push_back({{"cluster_id", c.cluster_id}, {"size", c.size}});
  json report = {{"k", o.k},
                 {"inertia", km.inertia},
                 {"iterations", km.iterations},
                 {"top_clusters", clusters},
                 {"coverage", top.coverage},
                 {"warning", top.warning ? json(*top.warning) : json(nullptr)}};
  run.write(o.out, tsv);
  if (!o.report.empty()) run.write(o.report, report.dump(2) + "\n");
  else std::cerr << report.dump(2) << "\n";
  return kOk;
}

// ---- keywords

struct KeywordOpts {
  std::string prompts, out = "-";
  int per_cluster = 10, representatives = 30, min_keywords = 2;
};

int cmd_keywords(Run& run, const KeywordOpts& o) {
  run.manifest.config = {{"per_cluster", o.per_cluster}, {"representatives", o.representatives}, {"min_keywords", o.min_keywords}};
  std::istringstream in(run.read(o.prompts));
  const auto prompts = xvd::read_prompts_tsv(in);
  std::map<int, xvd::ClusterDocument> docs;
  std::map<int, std::vector<xvd::PromptText>> members;
  for (const auto& p : prompts) {
    if (!p.cluster_id) throw xvd::Error(xvd::ErrorKind::Malformed, "prompt " + p.id + " has no cluster_id");
    auto& d = docs[*p.cluster_id];
    d.cluster_id = *p.cluster_id;
    d.texts.push_back(p.text);
    members[*p.cluster_id].push_back({p.id, p.text});
  }
  std::vector<xvd::ClusterDocument> list;
  for (auto& [id, d] : docs) list.push_back(d);
  const auto kws = xvd::tfidf_keywords(list, o.per_cluster);
  json out = json::array();
  for (const auto& ck : kws) {
    json words = json::array();
    for (const auto& k : ck.keywords) words.push_back({{"term", k.term}, {"score", k.score}, {"tf", k.tf}, {"df", k.df}});
    const auto reps = xvd::select_representative_prompts(members[ck.cluster_id], ck.keywords, o.representatives, o.min_keywords);
    json warnings = json::array();
    if (ck.warning) warnings.push_back(*ck.warning);
    if (reps.warning) warnings.push_back(*reps.warning);
    for (const auto& w : warnings) std::cerr << "warning: cluster " << ck.cluster_id << ": " << w.get<std::string>() << "\n";
    out.push_back({{"cluster_id", ck.cluster_id}, {"keywords", words}, {"representatives", reps.ids}, {"warnings", warnings}});
  }
  run.write(o.out, out.dump(2) + "\n");
  return kOk;
}

// ---- sample-prompts

struct SampleOpts {
  std::string candidates, out = "-", report;
  int n = 100, trials = 20000;
  std::uint64_t seed = 0;
};

int cmd_sample(Run& run, const SampleOpts& o) {
  run.manifest.seed = o.seed;
  run.manifest.config = {{"n", o.n}, {"trials", o.trials}};
  std::istringstream in(run.read(o.candidates));
  auto cands = xvd::read_prompts_tsv(in);
  xvd::LexiconTaggingClient tagger;
  for (auto& c : cands) {
    if (!c.cluster_id) throw xvd::Error(xvd::ErrorKind::Malformed, "candidate " + c.id + " has no cluster_id");
    if (c.content_labels.empty()) c.content_labels = xvd::tag_content_categories(c.text, tagger);
  }
  xvd::PipelineConfig cfg;
  cfg.final_sample = o.n;
  cfg.mc_trials = o.trials;
  cfg.seed = o.seed;
  if (const auto err = cfg.validate(); !err.empty()) throw xvd::Error(xvd::ErrorKind::InvalidArgument, err);
  const auto res = xvd::monte_carlo_balance(cands, cfg);
  std::vector<xvd::PromptRecord> chosen;
  for (auto i : res.selected) chosen.push_back(cands[i]);
  std::ostringstream sel;
  xvd::write_selection_tsv(sel, chosen);
  run.write(o.out, sel.str());
  const json report = {{"deviation", res.deviation}, {"best_trial", res.best_trial}, {"trials", o.trials}, {"selected", chosen.size()}};
  if (!o.report.empty()) run.write(o.report, report.dump(2) + "\n");
  else std::cerr << report.dump() << "\n";
  return kOk;
}

// ---- chunk-filter

struct ChunkOpts {
  std::string durations, similarity, out = "-";
  double threshold = xvd::kDefaultSimilarityThreshold;
};

int cmd_chunk_filter(Run& run, const ChunkOpts& o) {
  run.manifest.config = {{"threshold", o.threshold}};
  struct Planned {
    std::string video;
    std::size_t index;
    xvd::ChunkSpan span;
  };
  std::vector<Planned> plan;
  std::istringstream din(run.read(o.durations));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(din, line)) {
    ++lineno;
    if (line.empty() || line.rfind("video_id\t", 0) == 0) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw xvd::Error(xvd::ErrorKind::Malformed, o.durations + ":" + std::to_string(lineno) + ": expected video_id<TAB>duration");
    double dur = 0;
    try {
      dur = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw xvd::Error(xvd::ErrorKind::Malformed, o.durations + ":" + std::to_string(lineno) + ": bad duration");
    }
    if (!(dur >= 0)) throw xvd::Error(xvd::ErrorKind::Malformed, o.durations + ":" + std::to_string(lineno) + ": negative duration");
    const auto spans = xvd::chunk_plan(dur);
    for (std::size_t i = 0; i < spans.size(); ++i) plan.push_back({line.substr(0, tab), i, spans[i]});
  }
  std::istringstream sin(run.read(o.similarity));
  const Eigen::MatrixXd sim = xvd::read_matrix_csv(sin);
  if (static_cast<std::size_t>(sim.rows()) != plan.size())
    throw xvd::Error(xvd::ErrorKind::Malformed, "similarity table has " + std::to_string(sim.rows()) + " rows for " +
                                                    std::to_string(plan.size()) + " planned chunks");
  xvd::SimilarityTable table(static_cast<std::size_t>(sim.rows()));
  for (Eigen::Index r = 0; r < sim.rows(); ++r)
    for (Eigen::Index c = 0; c < sim.cols(); ++c) table[static_cast<std::size_t>(r)].push_back(sim(r, c));
  std::string out = "video_id\tchunk\tstart_s\tend_s\tduration\n";
  for (auto i : xvd::semantic_filter(table, o.threshold)) {
    const auto& p = plan[i];
    out += p.video + "\t" + std::to_string(p.index) + "\t" + fmt(p.span.start_s) + "\t" + fmt(p.span.end_s) + "\t" +
           std::to_string(p.span.duration) + "\n";
  }
  run.write(o.out, out);
  return kOk;
}

// ---- validate

int cmd_validate(Run& run, const std::vector<std::string>& files, const std::string& out_path) {
  std::string report;
  bool findings = false;
  for (const auto& p : expand_paths(files)) {
    xvd::VideoAnnotation a;
    try {
      a = xvd::parse_annotation(run.read(p));
    } catch (const xvd::Error& e) {
      if (e.kind == xvd::ErrorKind::Io) throw;
      report += p + "\tparse\t" + e.what() + "\n";
      findings = true;
      continue;
    }
    for (const auto& v : xvd::validate_annotation(a)) {
      report += p + "\t" + v.field + "\t" + v.rule + "\n";
      findings = true;
    }
  }
  run.write(out_path, report);
  return findings ? kFindings : kOk;
}

// ---- parse

int cmd_parse(Run& run, const std::vector<std::string>& files, bool strict, const std::string& out_path) {
  run.manifest.config = {{"mode", strict ? "strict" : "lenient"}};
  std::vector<json> rows;
  bool errors = false;
  for (const auto& p : files) {
    const std::string text = run.read(p);
    const auto res = xvd::parse_trace(text, strict ? xvd::ParseMode::Strict : xvd::ParseMode::Lenient);
    json diags = json::array();
    for (const auto& d : res.diagnostics) {
      const char* sev = d.severity == xvd::Severity::Error ? "error" : "warning";
      std::cerr << p << ":" << d.offset << ": " << sev << ": " << d.message << "\n";
      diags.push_back({{"offset", d.offset}, {"severity", sev}, {"message", d.message}});
    }
    errors = errors || res.has_errors() || !res.trace;
    json row = {{"file", p}, {"ok", res.trace.has_value() && !res.has_errors()}, {"diagnostics", diags}};
    row["trace"] = res.trace ? trace_to_json(*res.trace) : json(nullptr);
    if (res.trace) {
      json lints = json::array();
      for (const auto& l : xvd::lint_trace(*res.trace))
        lints.push_back({{"code", l.code}, {"block", l.block ? json(*l.block) : json(nullptr)}, {"message", l.message}});
      row["lints"] = lints;
    }
    rows.push_back(row);
  }
  run.write(out_path, jsonl(rows));
  return errors ? kFindings : kOk;
}

// ---- distill-prep

struct DistillOpts {
  std::vector<std::string> files;
  std::string out_dir;
  int max_cues = 3;
};

int cmd_distill_prep(Run& run, const DistillOpts& o) {
  run.manifest.config = {{"max_cues", o.max_cues}};
  const auto anns = load_annotations(run, o.files);
  xvd::StubDistillClient teacher;
  std::vector<json> requests, sft;
  bool findings = false;
  for (const auto& a : anns) {
    const auto req = xvd::build_distill_request(a);
    requests.push_back({{"video_id", req.video_id}, {"request", req.text}});
    const auto trace = xvd::run_distillation(teacher, req);
    const auto report = xvd::verify_trace_against_gt(trace, a);
    if (!report.pass()) {
      findings = true;
      for (const auto& d : report.diffs)
        std::cerr << a.video_id << ": block " << (d.block ? std::to_string(*d.block) : "-") << " " << d.field
                  << ": expected '" << d.expected << "' got '" << d.actual << "'\n";
      continue;
    }
    for (const auto& r : xvd::emit_sft_records(xvd::split_sample(a, o.max_cues))) sft.push_back(xvd::sft_to_json(r));
  }
  fs::create_directories(o.out_dir);
  run.write((fs::path(o.out_dir) / "requests.jsonl").string(), jsonl(requests));
  run.write((fs::path(o.out_dir) / "sft.jsonl").string(), jsonl(sft));
  return findings ? kFindings : kOk;
}

// ---- train-toy

struct TrainOpts {
  int steps = 500, dim = 16, train_size = 200, heldout_size = 100;
  double lr = 0.1, alpha = 1.0, beta = 10.0;
  std::uint64_t seed = 0;
  std::string curve = "-", params;
};

int cmd_train_toy(Run& run, const TrainOpts& o) {
  run.manifest.seed = o.seed;
  run.manifest.config = {{"steps", o.steps}, {"dim", o.dim}, {"lr", o.lr}, {"alpha", o.alpha}, {"beta", o.beta},
                         {"train_size", o.train_size}, {"heldout_size", o.heldout_size}};
  const auto split = xvd::toy::make_toy_split(o.seed, static_cast<std::size_t>(o.train_size), static_cast<std::size_t>(o.heldout_size));
  xvd::toy::TrainConfig cfg;
  cfg.weights = {o.alpha, o.beta};
  cfg.steps = o.steps;
  cfg.learning_rate = o.lr;
  cfg.dim = o.dim;
  cfg.seed = o.seed;
  const auto res = xvd::toy::train_toy(split.train, cfg);
  std::ostringstream curve;
  xvd::toy::write_curve_csv(curve, res.curve);
  run.write(o.curve, curve.str());
  if (!o.params.empty()) {
    std::ostringstream params;
    xvd::toy::write_params(params, res.model);
    run.write(o.params, params.str());
  }
  const auto held = xvd::toy::evaluate(res.model, split.heldout, cfg.weights);
  std::fprintf(stderr, "held-out accuracy %.4f, cls_loss %.6g, lm_loss %.6g\n", held.accuracy, held.cls_loss, held.lm_loss);
  return kOk;
}

// ---- score

struct ScoreOpts {
  std::string detections, judged, matches, responses, out = "-", json_out;
  std::vector<std::string> annotations;
  double tau = 0.3, radius = 100.0;
  bool no_category = false;
};

int cmd_score(Run& run, const ScoreOpts& o) {
  xvd::eval::MatchConfig cfg{o.tau, o.radius, !o.no_category};
  cfg.validate();
  run.manifest.config = {{"tau", o.tau}, {"radius", o.radius}, {"require_category", !o.no_category}};
  std::vector<xvd::eval::DetectionRecord> records;
  std::vector<xvd::eval::JudgedCue> judged;
  std::vector<xvd::eval::CueMatch> matches;
  {
    std::istringstream in(run.read(o.detections));
    records = xvd::eval::read_detections_jsonl(in);
  }
  if (!o.judged.empty()) {
    std::istringstream in(run.read(o.judged));
    judged = xvd::eval::read_judged_csv(in);
  }
  if (!o.matches.empty()) {
    std::istringstream in(run.read(o.matches));
    matches = xvd::eval::read_matches_jsonl(in);
  }
  if (!o.responses.empty()) {
    std::istringstream in(run.read(o.responses));
    const auto responses = xvd::eval::read_responses_jsonl(in);
    std::map<std::string, xvd::VideoAnnotation> gt;
    for (auto& a : load_annotations(run, o.annotations)) gt[a.video_id] = a;
    std::vector<std::string> warnings;
    auto auto_matches = xvd::eval::match_responses(responses, gt, cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    matches.insert(matches.end(), auto_matches.begin(), auto_matches.end());
  }
  const auto report = xvd::eval::build_report(records, judged, matches, cfg);
  run.write(o.out, xvd::eval::format_report_text(report));
  if (!o.json_out.empty()) run.write(o.json_out, xvd::eval::report_to_json(report).dump(2) + "\n");
  return kOk;
}

// ---- serve

struct ServeOpts {
  std::string store, host = "127.0.0.1", segmenter = "stub";
  int port = 8080;
};

int cmd_serve(const ServeOpts& o) {
  std::string root = o.store;
  if (root.empty()) {
    const char* env = std::getenv("XVD_STORE");
    if (!env) throw xvd::Error(xvd::ErrorKind::InvalidArgument, "no store path: pass --store or set XVD_STORE");
    root = env;
  }
  xvd::service::Store store(root);
  std::unique_ptr<xvd::service::SegmentationClient> seg;
  if (o.segmenter == "stub") seg = std::make_unique<xvd::service::StubSegmentationClient>();
  else seg = std::make_unique<xvd::service::HttpSegmentationClient>(o.segmenter);
  xvd::service::AnnotationServer server(store, *seg);
  const int port = server.bind(o.host, o.port);
  if (port < 0) throw xvd::Error(xvd::ErrorKind::Io, "cannot bind " + o.host + ":" + std::to_string(o.port));
  std::cerr << "serving " << root << " on http://" << o.host << ":" << port << " (segmenter: " << seg->id() << ")\n";
  return server.listen_after_bind() ? kOk : kIo;
}

int exit_for(const xvd::Error& e) {
  switch (e.kind) {
    case xvd::ErrorKind::Io:
    case xvd::ErrorKind::Malformed:
    case xvd::ErrorKind::NotFound: return kIo;
    case xvd::ErrorKind::InvalidArgument:
    case xvd::ErrorKind::InvalidRate:
    case xvd::ErrorKind::InsufficientPoints:
    case xvd::ErrorKind::InsufficientCandidates:
    case xvd::ErrorKind::InsufficientExemplars:
    case xvd::ErrorKind::InvalidCorpus: return kUsage;
    default: return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidence-grounded AI-generated video detection toolkit"};
  app.set_version_flag("--version", XVD_VERSION);
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);
  Run run;
  run.manifest.version = XVD_VERSION;
  app.add_option("--manifest", run.manifest_path, "Run manifest path (default: <first output>.manifest.json)");

  ClusterOpts cl;
  auto* c_cluster = app.add_subcommand("cluster", "Reduce embeddings to 3-D, run k-means and report the top clusters");
  c_cluster->add_option("--embeddings", cl.embeddings, "Embedding matrix (binary XVEM or CSV)")->required()->check(CLI::ExistingFile);
  c_cluster->add_option("--coords", cl.coords, "Precomputed n x 3 coordinates used instead of PCA")->check(CLI::ExistingFile);
  c_cluster->add_option("--k", cl.k, "Number of clusters")->capture_default_str();
  c_cluster->add_option("--top-m", cl.top_m, "Clusters to keep")->capture_default_str();
  c_cluster->add_option("--coverage", cl.coverage, "Coverage below which a warning is issued")->capture_default_str();
  c_cluster->add_option("--seed", cl.seed, "k-means++ seed")->required();
  c_cluster->add_option("--out", cl.out, "Assignments TSV")->capture_default_str();
  c_cluster->add_option("--report", cl.report, "Top-cluster report JSON (default: stderr)");

  KeywordOpts kw;
  auto* c_kw = app.add_subcommand("keywords", "Per-cluster tf-idf keywords and representative prompts");
  c_kw->add_option("--prompts", kw.prompts, "Prompts TSV with cluster_id column")->required()->check(CLI::ExistingFile);
  c_kw->add_option("--per-cluster", kw.per_cluster, "Keywords per cluster")->capture_default_str();
  c_kw->add_option("--representatives", kw.representatives, "Representative prompts per cluster")->capture_default_str();
  c_kw->add_option("--min-keywords", kw.min_keywords, "Distinct keywords a representative must contain")->capture_default_str();
  c_kw->add_option("--out", kw.out, "Output JSON")->capture_default_str();

  SampleOpts sp;
  auto* c_sample = app.add_subcommand("sample-prompts", "Monte Carlo balanced selection of the final prompt set");
  c_sample->add_option("--candidates", sp.candidates, "Candidate prompts TSV with cluster_id (and labels)")->required()->check(CLI::ExistingFile);
  c_sample->add_option("--n", sp.n, "Selection size")->capture_default_str();
  c_sample->add_option("--trials", sp.trials, "Monte Carlo trials")->capture_default_str();
  c_sample->add_option("--seed", sp.seed, "Trial seed")->required();
  c_sample->add_option("--out", sp.out, "Selection TSV")->capture_default_str();
  c_sample->add_option("--report", sp.report, "Deviation report JSON (default: stderr)");

  ChunkOpts ch;
  auto* c_chunk = app.add_subcommand("chunk-filter", "Plan real-video chunks and keep those similar to some prompt");
  c_chunk->add_option("--durations", ch.durations, "TSV video_id<TAB>duration_s")->required()->check(CLI::ExistingFile);
  c_chunk->add_option("--similarity", ch.similarity, "CSV, one row per planned chunk in order, one column per prompt")->required()->check(CLI::ExistingFile);
  c_chunk->add_option("--threshold", ch.threshold, "Inclusive similarity threshold")->capture_default_str();
  c_chunk->add_option("--out", ch.out, "Kept chunks TSV")->capture_default_str();

  std::vector<std::string> val_files;
  std::string val_out = "-";
  auto* c_validate = app.add_subcommand("validate", "Check annotation records; exit 1 on any violation");
  c_validate->add_option("files", val_files, "Annotation files or directories")->required();
  c_validate->add_option("--out", val_out, "Violation report TSV")->capture_default_str();

  std::vector<std::string> parse_files;
  std::string parse_out = "-";
  bool strict = false, lenient = false;
  auto* c_parse = app.add_subcommand("parse", "Parse reasoning traces into structured records");
  c_parse->add_option("files", parse_files, "Trace text files")->required()->check(CLI::ExistingFile);
  auto* f_strict = c_parse->add_flag("--strict", strict, "Reject any deviation from the grammar");
  c_parse->add_flag("--lenient", lenient, "Recover from common deviations (default)")->excludes(f_strict);
  c_parse->add_option("--out", parse_out, "Output JSONL")->capture_default_str();

  DistillOpts ds;
  auto* c_distill = app.add_subcommand("distill-prep", "Build distillation requests and verified fine-tuning records");
  c_distill->add_option("files", ds.files, "Annotation files or directories")->required();
  c_distill->add_option("--out-dir", ds.out_dir, "Directory for requests.jsonl and sft.jsonl")->required();
  c_distill->add_option("--max-cues", ds.max_cues, "Defects per training view")->capture_default_str();

  TrainOpts tr;
  auto* c_train = app.add_subcommand("train-toy", "Train the toy sequence model on the planted-marker corpus");
  c_train->add_option("--steps", tr.steps, "Gradient steps")->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  c_train->add_option("--alpha", tr.alpha, "Language-model loss weight")->capture_default_str();
  c_train->add_option("--beta", tr.beta, "Classifier loss weight")->capture_default_str();
  c_train->add_option("--dim", tr.dim, "Hidden dimension")->capture_default_str();
  c_train->add_option("--train-size", tr.train_size, "Training sequences")->capture_default_str();
  c_train->add_option("--heldout-size", tr.heldout_size, "Held-out sequences")->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Corpus and initialization seed")->required();
  c_train->add_option("--curve", tr.curve, "Loss curve CSV")->capture_default_str();
  c_train->add_option("--params", tr.params, "Trained parameter file");

  ScoreOpts sc;
  auto* c_score = app.add_subcommand("score", "Detection and explanation metrics in the results-table layout");
  c_score->add_option("--detections", sc.detections, "Detections JSONL")->required()->check(CLI::ExistingFile);
  c_score->add_option("--judged", sc.judged, "Judged cues CSV (video_id, cue_index, valid)")->check(CLI::ExistingFile);
  c_score->add_option("--matches", sc.matches, "Cue matches JSONL")->check(CLI::ExistingFile);
  auto* o_resp = c_score->add_option("--responses", sc.responses, "Model responses JSONL, matched automatically")->check(CLI::ExistingFile);
  c_score->add_option("--annotations", sc.annotations, "Ground-truth annotations for --responses")->needs(o_resp);
  c_score->add_option("--tau", sc.tau, "Temporal IoU threshold")->capture_default_str();
  c_score->add_option("--radius", sc.radius, "Point radius in normalized units")->capture_default_str();
  c_score->add_flag("--no-category", sc.no_category, "Do not require a shared defect category");
  c_score->add_option("--out", sc.out, "Report text")->capture_default_str();
  c_score->add_option("--json", sc.json_out, "Structured report JSON");

  std::vector<std::string> stats_files;
  std::string stats_out = "-";
  auto* c_stats = app.add_subcommand("stats", "Video counts per source and defect counts per category");
  c_stats->add_option("files", stats_files, "Annotation files or directories")->required();
  c_stats->add_option("--out", stats_out, "Stats TSV")->capture_default_str();

  ServeOpts sv;
  auto* c_serve = app.add_subcommand("serve", "Run the annotation service");
  c_serve->add_option("--store", sv.store, "Store directory (default: $XVD_STORE)");
  c_serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", sv.port, "Port (0 picks a free one)")->capture_default_str();
  c_serve->add_option("--segmenter", sv.segmenter, "\"stub\" or the URL of a segmentation service")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    int code = kOk;
    if (c_cluster->parsed()) {
      run.manifest.command = "cluster";
      code = cmd_cluster(run, cl);
    } else if (c_kw->parsed()) {
      run.manifest.command = "keywords";
      code = cmd_keywords(run, kw);
    } else if (c_sample->parsed()) {
      run.manifest.command = "sample-prompts";
      code = cmd_sample(run, sp);
    } else if (c_chunk->parsed()) {
      run.manifest.command = "chunk-filter";
      code = cmd_chunk_filter(run, ch);
    } else if (c_validate->parsed()) {
      run.manifest.command = "validate";
      code = cmd_validate(run, val_files, val_out);
    } else if (c_parse->parsed()) {
      run.manifest.command = "parse";
      code = cmd_parse(run, parse_files, strict, parse_out);
    } else if (c_distill->parsed()) {
      run.manifest.command = "distill-prep";
      code = cmd_distill_prep(run, ds);
    } else if (c_train->parsed()) {
      run.manifest.command = "train-toy";
      code = cmd_train_toy(run, tr);
    } else if (c_score->parsed()) {
      run.manifest.command = "score";
      code = cmd_score(run, sc);
    } else if (c_stats->parsed()) {
      run.manifest.command = "stats";
      run.write(stats_out, xvd::format_stats(xvd::corpus_stats(load_annotations(run, stats_files))));
    } else if (c_serve->parsed()) {
      return cmd_serve(sv);
    }
    run.finish();
    return code;
  } catch (const xvd::Error& e) {
    std::cerr << "xvd: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "xvd: internal error: " << e.what() << "\n";
    return kInternal;
  }
}
