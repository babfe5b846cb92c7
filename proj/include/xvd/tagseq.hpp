#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xvd/evidence.hpp"

namespace xvd {

struct Point2d {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point2d&, const Point2d&) = default;
};

struct Timestamp {
  std::string raw;
  std::optional<TimeSpan> span;
  friend bool operator==(const Timestamp&, const Timestamp&) = default;
};

// One <defect_cate>..<point_2d> group. nullopt fields are the literal "None" placeholder.
struct EvidenceBlock {
  std::optional<CategorySet> categories;
  std::optional<Timestamp> timestamp;
  std::string explanation;
  std::optional<int> located_frame;
  std::optional<std::vector<Point2d>> points;

  bool is_placeholder() const { return !categories && !timestamp && !located_frame && !points; }
  bool is_substantive() const { return categories && timestamp && located_frame && points; }
  friend bool operator==(const EvidenceBlock&, const EvidenceBlock&) = default;
};

struct ReasoningTrace {
  std::string think;
  std::vector<EvidenceBlock> evidence;
  Verdict answer = Verdict::AIGenerated;
  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

enum class ParseMode { Strict, Lenient };
enum class Severity { Warning, Error };

struct Diagnostic {
  std::size_t offset = 0;  // byte offset into the input
  Severity severity = Severity::Error;
  std::string message;
};

struct ParseOutcome {
  std::optional<ReasoningTrace> trace;
  std::vector<Diagnostic> diagnostics;

  bool has_errors() const;
  std::size_t warning_count() const;
};

// Strict accepts only the canonical grammar; Lenient first tries Strict and, failing that,
// runs a recovering parse where every repair is reported as a warning. Never throws.
ParseOutcome parse_trace(std::string_view text, ParseMode mode);

// Canonical text. Throws Unserializable when the trace breaks its invariants or a text
// field cannot be represented (contains a tag, or has surrounding whitespace).
std::string serialize_trace(const ReasoningTrace& trace);

// Empty string when serializable, otherwise the first reason.
std::string check_serializable(const ReasoningTrace& trace);

std::string format_points(const std::vector<Point2d>& points);
std::string format_categories(CategorySet categories);

struct VideoMeta {
  double fps = 0.0;
  int width = 0;
  int height = 0;
  int frame_count = 0;
};

struct Lint {
  std::string code;
  std::optional<std::size_t> block;
  std::string message;
};

// Codes: answer-evidence-conflict, point-out-of-range, frame-outside-span,
// timestamp-misordered, think-too-short.
std::vector<Lint> lint_trace(const ReasoningTrace& trace, const std::optional<VideoMeta>& meta = std::nullopt);

}  // namespace xvd
