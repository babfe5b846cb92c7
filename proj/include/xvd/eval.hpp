#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "xvd/evidence.hpp"
#include "xvd/tagseq.hpp"

namespace xvd::eval {

inline constexpr const char* kDefaultModel = "model";

// Exact ratio num/den rendered as a percentage with one decimal, rounded half-up.
struct Percentage {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const { return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den); }
  // Percentage in tenths, e.g. 13/15 -> 867.
  std::uint64_t tenths() const;
  std::string format() const;
};

struct DetectionRecord {
  std::string model = kDefaultModel;
  std::string video_id;
  std::string source;
  Verdict truth = Verdict::Real;
  Verdict prediction = Verdict::Real;

  bool correct() const { return truth == prediction; }
};

struct SourceRecall {
  std::string source;
  Percentage recall;
};

// Sources in first-appearance order with Real moved last.
std::vector<std::string> source_order(const std::vector<DetectionRecord>& records);

struct RecallResult {
  std::vector<SourceRecall> by_source;
  std::vector<std::string> warnings;
};

// Recall per source. When `sources` is given, sources with no records are omitted with a warning.
RecallResult recall_by_source(const std::vector<DetectionRecord>& records, const std::vector<std::string>& sources = {});

// Micro accuracy over all records. Throws UndefinedMetric on an empty list.
Percentage overall_accuracy(const std::vector<DetectionRecord>& records);

struct JudgedCue {
  std::string model = kDefaultModel;
  std::string video_id;
  int cue_index = 0;
  bool valid = false;
};

// Throws UndefinedMetric on an empty list.
Percentage explanation_precision(const std::vector<JudgedCue>& judged);

struct DiversityResult {
  std::map<std::string, Percentage> by_model;
  std::size_t union_size = 0;
  std::vector<std::string> warnings;
};

// |items(m)| / |union of all items|. An empty union gives zeros and a warning.
DiversityResult explanation_diversity(const std::map<std::string, std::set<std::string>>& items);

struct MatchConfig {
  double tau = 0.3;
  double radius = 100.0;
  bool require_category = true;

  void validate() const;
};

// Intersection over union of two time spans; 0 when either is empty and they differ.
double temporal_iou(TimeSpan a, TimeSpan b);

// Stable identity of a ground-truth defect: "<video_id>#<index>".
std::string gt_item_id(const std::string& video_id, std::size_t defect_index);

// Indices of ground-truth defects the block matches. Blocks without a parseable time span match nothing.
std::vector<std::size_t> auto_match(const EvidenceBlock& block, const VideoAnnotation& gt, const MatchConfig& cfg = {});

struct CueMatch {
  std::string model = kDefaultModel;
  std::string video_id;
  int cue_index = 0;
  std::vector<std::string> gt_items;
};

// Lenient-parses each response and matches every evidence block against the video's annotation.
struct ModelResponse {
  std::string model = kDefaultModel;
  std::string video_id;
  std::string text;
};
std::vector<CueMatch> match_responses(const std::vector<ModelResponse>& responses,
                                      const std::map<std::string, VideoAnnotation>& annotations,
                                      const MatchConfig& cfg, std::vector<std::string>* warnings = nullptr);

struct ReportRow {
  std::string model;
  std::vector<std::optional<Percentage>> recalls;  // aligned with MetricsReport::sources
  std::optional<Percentage> average;
  std::optional<Percentage> precision;
  std::optional<Percentage> diversity;
};

struct MetricsReport {
  std::vector<std::string> sources;
  std::vector<ReportRow> rows;
  MatchConfig config;
  std::vector<std::string> warnings;
};

// Rows in first-appearance order of models across the three inputs. Diversity counts only matched
// cues judged valid when any judgment exists for that model, and all matched cues otherwise.
MetricsReport build_report(const std::vector<DetectionRecord>& records, const std::vector<JudgedCue>& judged,
                           const std::vector<CueMatch>& matches, const MatchConfig& cfg = {});

std::string format_report_text(const MetricsReport& report);
nlohmann::json report_to_json(const MetricsReport& report);

// Line-delimited inputs. Blank lines are skipped; anything else malformed throws Malformed with the line number.
std::vector<DetectionRecord> read_detections_jsonl(std::istream& in);
std::vector<JudgedCue> read_judged_csv(std::istream& in);
std::vector<CueMatch> read_matches_jsonl(std::istream& in);
std::vector<ModelResponse> read_responses_jsonl(std::istream& in);

}  // namespace xvd::eval
