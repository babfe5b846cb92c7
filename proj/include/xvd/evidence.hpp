#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xvd/error.hpp"

namespace xvd {

enum class DefectCategory : std::uint8_t {
  ObjectInconsistency,
  TextureJitter,
  InteractionAnomaly,
  MovementAnomaly,
  SpaceAnomaly,
  LightingAnomaly,
};

inline constexpr std::array<DefectCategory, 6> kAllDefectCategories = {
    DefectCategory::ObjectInconsistency, DefectCategory::TextureJitter,
    DefectCategory::InteractionAnomaly,  DefectCategory::MovementAnomaly,
    DefectCategory::SpaceAnomaly,        DefectCategory::LightingAnomaly,
};

enum class AnchorType : std::uint8_t { NaturalRecorded, Handcrafted };
enum class Verdict : std::uint8_t { AIGenerated, Real };

enum class ContentCategory : std::uint8_t {
  People,
  Animals,
  Vehicles,
  Plants,
  Artifacts,
  Food,
  Buildings,
  Scenery,
};

inline constexpr std::array<ContentCategory, 8> kAllContentCategories = {
    ContentCategory::People,    ContentCategory::Animals, ContentCategory::Vehicles,
    ContentCategory::Plants,    ContentCategory::Artifacts, ContentCategory::Food,
    ContentCategory::Buildings, ContentCategory::Scenery,
};

enum class Strictness : std::uint8_t { Strict, Relaxed };
enum class PointLabel : std::uint8_t { Negative = 0, Positive = 1 };

// Canonical names: "Object Inconsistency", "natural recorded video", "AI generated video", "people" ...
std::string_view to_string(DefectCategory c);
std::string_view to_string(AnchorType a);
std::string_view to_string(Verdict v);
std::string_view to_string(ContentCategory c);
std::string_view to_string(Strictness s);

// Case-insensitive; spaces, underscores and hyphens are interchangeable.
std::optional<DefectCategory> parse_defect_category(std::string_view text);
std::optional<AnchorType> parse_anchor_type(std::string_view text);
std::optional<Verdict> parse_verdict(std::string_view text);
std::optional<ContentCategory> parse_content_category(std::string_view text);

// Real = 0, AIGenerated = 1.
constexpr int binary_label(Verdict v) { return v == Verdict::AIGenerated ? 1 : 0; }

// Small ordered set over an enum with at most 8 values, iterated in enum order.
template <typename Enum, std::size_t N>
class EnumSet {
 public:
  constexpr EnumSet() = default;
  constexpr EnumSet(std::initializer_list<Enum> items) {
    for (Enum e : items) insert(e);
  }

  constexpr void insert(Enum e) { bits_ |= bit(e); }
  constexpr void erase(Enum e) { bits_ &= static_cast<std::uint8_t>(~bit(e)); }
  constexpr bool contains(Enum e) const { return (bits_ & bit(e)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(__builtin_popcount(bits_)); }
  constexpr bool intersects(EnumSet other) const { return (bits_ & other.bits_) != 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  std::vector<Enum> items() const {
    std::vector<Enum> out;
    for (std::size_t i = 0; i < N; ++i)
      if (bits_ & (1u << i)) out.push_back(static_cast<Enum>(i));
    return out;
  }

  friend constexpr bool operator==(EnumSet, EnumSet) = default;

 private:
  static constexpr std::uint8_t bit(Enum e) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(e)); }
  std::uint8_t bits_ = 0;
};

using CategorySet = EnumSet<DefectCategory, 6>;
using ContentLabelSet = EnumSet<ContentCategory, 8>;

struct PointPrompt {
  int frame = 0;
  int x = 0;
  int y = 0;
  PointLabel label = PointLabel::Positive;

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

// Point with coordinates on the 0..1000 grid used in model-facing text.
struct NormalizedPoint {
  int frame = 0;
  int x = 0;
  int y = 0;
  friend bool operator==(const NormalizedPoint&, const NormalizedPoint&) = default;
};

// Inclusive frame indices.
struct FrameRange {
  int start_frame = 0;
  int end_frame = 0;
  bool contains(int frame) const { return frame >= start_frame && frame <= end_frame; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct TimeSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  double duration() const { return end_s - start_s; }
  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

struct DefectRecord {
  CategorySet categories;
  FrameRange frame_range;
  std::vector<PointPrompt> points;
  std::string explanation;
  // Earlier point sets tried while refining the mask; informational only.
  std::vector<std::vector<PointPrompt>> attempts;

  friend bool operator==(const DefectRecord&, const DefectRecord&) = default;
};

struct VideoAnnotation {
  std::string video_id;
  std::string source;
  double fps = 0.0;
  int width = 0;
  int height = 0;
  int frame_count = 0;
  Verdict verdict = Verdict::Real;
  std::optional<AnchorType> anchor;
  std::vector<DefectRecord> defects;
  std::optional<std::string> real_explanation;

  friend bool operator==(const VideoAnnotation&, const VideoAnnotation&) = default;
};

inline constexpr std::string_view kRealSource = "Real";

// start = start_frame / fps, end = (end_frame + 1) / fps. Throws InvalidRate when fps <= 0.
TimeSpan frames_to_timespan(FrameRange range, double fps);

// "{start}s-{end}s" with two decimals, e.g. "1.00s-2.03s".
std::string format_timestamp(TimeSpan span);
std::optional<TimeSpan> parse_canonical_timestamp(std::string_view text);

// Round-half-up onto the 0..1000 grid. Throws PointOutOfFrame for pixels outside the frame.
NormalizedPoint normalize_point(const PointPrompt& p, int width, int height);
PixelPoint denormalize_point(const NormalizedPoint& n, int width, int height);

Strictness strictness_policy(AnchorType anchor, DefectCategory category);

// The positive point on the earliest frame, first in list order on ties.
PointPrompt training_point_view(const DefectRecord& defect);

struct Violation {
  std::string field;
  std::string rule;
  friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> validate_annotation(const VideoAnnotation& a);

}  // namespace xvd
