#include "xvd/evidence.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace xvd {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidRate: return "invalid-rate";
    case ErrorKind::PointOutOfFrame: return "point-out-of-frame";
    case ErrorKind::NoPositivePrompt: return "no-positive-prompt";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InsufficientPoints: return "insufficient-points";
    case ErrorKind::InsufficientExemplars: return "insufficient-exemplars";
    case ErrorKind::InsufficientCandidates: return "insufficient-candidates";
    case ErrorKind::Retryable: return "retryable-error";
    case ErrorKind::LengthMismatch: return "length-mismatch";
    case ErrorKind::MissingAnswerToken: return "missing-answer-token";
    case ErrorKind::NoPrecedingState: return "no-preceding-state";
    case ErrorKind::InvalidCorpus: return "invalid-corpus";
    case ErrorKind::Unserializable: return "unserializable";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::Malformed: return "malformed";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Rejected: return "rejected";
    case ErrorKind::Io: return "io-error";
  }
  return "unknown";
}

namespace {

// Lowercase, '_' and '-' become spaces, runs of whitespace collapse, trimmed.
std::string fold_name(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c == '_' || c == '-' || std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view text, const std::array<Enum, N>& all) {
  const std::string folded = fold_name(text);
  for (Enum e : all)
    if (fold_name(to_string(e)) == folded) return e;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(DefectCategory c) {
  switch (c) {
    case DefectCategory::ObjectInconsistency: return "Object Inconsistency";
    case DefectCategory::TextureJitter: return "Texture Jitter";
    case DefectCategory::InteractionAnomaly: return "Interaction Anomaly";
    case DefectCategory::MovementAnomaly: return "Movement Anomaly";
    case DefectCategory::SpaceAnomaly: return "Space Anomaly";
    case DefectCategory::LightingAnomaly: return "Lighting Anomaly";
  }
  return "";
}

std::string_view to_string(AnchorType a) {
  return a == AnchorType::NaturalRecorded ? "natural recorded video" : "handcrafted video";
}

std::string_view to_string(Verdict v) {
  return v == Verdict::AIGenerated ? "AI generated video" : "Real video";
}

std::string_view to_string(ContentCategory c) {
  switch (c) {
    case ContentCategory::People: return "people";
    case ContentCategory::Animals: return "animals";
    case ContentCategory::Vehicles: return "vehicles";
    case ContentCategory::Plants: return "plants";
    case ContentCategory::Artifacts: return "artifacts";
    case ContentCategory::Food: return "food";
    case ContentCategory::Buildings: return "buildings";
    case ContentCategory::Scenery: return "scenery";
  }
  return "";
}

std::string_view to_string(Strictness s) { return s == Strictness::Strict ? "strict" : "relaxed"; }

std::optional<DefectCategory> parse_defect_category(std::string_view text) {
  return lookup(text, kAllDefectCategories);
}

std::optional<AnchorType> parse_anchor_type(std::string_view text) {
  static constexpr std::array<AnchorType, 2> all = {AnchorType::NaturalRecorded, AnchorType::Handcrafted};
  if (auto a = lookup(text, all)) return a;
  const std::string folded = fold_name(text);
  if (folded == "natural recorded") return AnchorType::NaturalRecorded;
  if (folded == "handcrafted") return AnchorType::Handcrafted;
  return std::nullopt;
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  static constexpr std::array<Verdict, 2> all = {Verdict::AIGenerated, Verdict::Real};
  return lookup(text, all);
}

std::optional<ContentCategory> parse_content_category(std::string_view text) {
  return lookup(text, kAllContentCategories);
}

TimeSpan frames_to_timespan(FrameRange range, double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw Error(ErrorKind::InvalidRate, "fps must be positive");
  return TimeSpan{range.start_frame / fps, (range.end_frame + 1) / fps};
}

std::string format_timestamp(TimeSpan span) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2fs-%.2fs", span.start_s, span.end_s);
  return buf;
}

std::optional<TimeSpan> parse_canonical_timestamp(std::string_view text) {
  // digits '.' two digits 's'
  auto read = [&](std::size_t& pos, double& value) -> bool {
    const std::size_t begin = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == begin || pos >= text.size() || text[pos] != '.') return false;
    ++pos;
    for (int i = 0; i < 2; ++i, ++pos)
      if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos]))) return false;
    auto [ptr, ec] = std::from_chars(text.data() + begin, text.data() + pos, value);
    if (ec != std::errc() || ptr != text.data() + pos) return false;
    if (pos >= text.size() || text[pos] != 's') return false;
    ++pos;
    return true;
  };
  std::size_t pos = 0;
  TimeSpan span;
  if (!read(pos, span.start_s)) return std::nullopt;
  if (pos >= text.size() || text[pos] != '-') return std::nullopt;
  ++pos;
  if (!read(pos, span.end_s) || pos != text.size()) return std::nullopt;
  return span;
}

namespace {

// floor(num / den + 1/2) for non-negative operands.
long long round_half_up_ratio(long long num, long long den) { return (2 * num + den) / (2 * den); }

}  // namespace

NormalizedPoint normalize_point(const PointPrompt& p, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidArgument, "frame dimensions must be positive");
  if (p.x < 0 || p.x >= width || p.y < 0 || p.y >= height)
    throw Error(ErrorKind::PointOutOfFrame, "point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                                ") outside " + std::to_string(width) + "x" + std::to_string(height));
  auto scale = [](int v, int dim) {
    return static_cast<int>(std::clamp(round_half_up_ratio(1000LL * v, dim), 0LL, 1000LL));
  };
  return NormalizedPoint{p.frame, scale(p.x, width), scale(p.y, height)};
}

PixelPoint denormalize_point(const NormalizedPoint& n, int width, int height) {
  auto scale = [](int v, int dim) {
    const long long clamped = std::clamp(v, 0, 1000);
    return static_cast<int>(std::clamp(round_half_up_ratio(clamped * dim, 1000), 0LL, dim - 1LL));
  };
  return PixelPoint{scale(n.x, width), scale(n.y, height)};
}

Strictness strictness_policy(AnchorType anchor, DefectCategory category) {
  if (anchor != AnchorType::Handcrafted) return Strictness::Strict;
  switch (category) {
    case DefectCategory::MovementAnomaly:
    case DefectCategory::SpaceAnomaly:
    case DefectCategory::LightingAnomaly:
      return Strictness::Relaxed;
    default:
      return Strictness::Strict;
  }
}

PointPrompt training_point_view(const DefectRecord& defect) {
  const PointPrompt* best = nullptr;
  for (const auto& p : defect.points) {
    if (p.label != PointLabel::Positive) continue;
    if (best == nullptr || p.frame < best->frame) best = &p;
  }
  if (best == nullptr) throw Error(ErrorKind::NoPositivePrompt, "defect has no positive point");
  return *best;
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

std::vector<Violation> validate_annotation(const VideoAnnotation& a) {
  std::vector<Violation> out;
  auto add = [&](std::string field, std::string rule) { out.push_back({std::move(field), std::move(rule)}); };

  if (blank(a.video_id)) add("video_id", "empty-video-id");
  if (blank(a.source)) add("source", "empty-source");
  if (!(a.fps > 0.0) || !std::isfinite(a.fps)) add("fps", "invalid-rate");
  if (a.width <= 0 || a.height <= 0) add("width/height", "invalid-dimensions");
  if (a.frame_count <= 0) add("frame_count", "invalid-frame-count");

  const bool real = a.verdict == Verdict::Real;
  if (real != (a.source == kRealSource)) add("source", "source-verdict-conflict");
  if (real) {
    if (!a.defects.empty()) add("defects", "verdict-defect-conflict");
    if (a.anchor) add("anchor", "unexpected-anchor");
    if (!a.real_explanation || blank(*a.real_explanation)) add("real_explanation", "missing-real-explanation");
  } else {
    if (a.defects.empty()) add("defects", "missing-defects");
    if (!a.anchor) add("anchor", "missing-anchor");
    if (a.real_explanation) add("real_explanation", "unexpected-real-explanation");
  }

  for (std::size_t i = 0; i < a.defects.size(); ++i) {
    const auto& d = a.defects[i];
    const std::string at = "defects[" + std::to_string(i) + "]";
    if (d.categories.empty()) add(at + ".categories", "empty-categories");
    if (d.frame_range.start_frame < 0 || d.frame_range.start_frame > d.frame_range.end_frame)
      add(at + ".frame_range", "frame-range-order");
    else if (a.frame_count > 0 && d.frame_range.end_frame >= a.frame_count)
      add(at + ".frame_range", "frame-range-beyond-video");
    if (blank(d.explanation)) add(at + ".explanation", "empty-explanation");
    bool has_positive = false;
    for (std::size_t j = 0; j < d.points.size(); ++j) {
      const auto& p = d.points[j];
      const std::string pat = at + ".points[" + std::to_string(j) + "]";
      if (!d.frame_range.contains(p.frame)) add(pat, "point-frame-outside-range");
      if (p.x < 0 || p.y < 0 || p.x >= a.width || p.y >= a.height) add(pat, "point-out-of-frame");
      has_positive = has_positive || p.label == PointLabel::Positive;
    }
    if (!has_positive) add(at + ".points", "no-positive-prompt");
  }
  return out;
}

}  // namespace xvd
