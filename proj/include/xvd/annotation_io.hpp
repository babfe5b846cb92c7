#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "xvd/evidence.hpp"

namespace xvd {

// Annotation record schema (keys emitted in sorted order):
//   video_id, source, fps, width, height, frame_count
//   verdict          "AI generated video" | "Real video"
//   anchor_type      "natural recorded video" | "handcrafted video" | null
//   real_explanation string | null
//   defects[]        { defect_cate: [names], frame_range: [start, end],
//                      timestamp: "1.00s-2.03s" (derived, ignored on input),
//                      point: [[frame, x, y, label]...] with label 1 = positive, 0 = negative,
//                      explanation, attempts: [[[frame, x, y, label]...]...] (omitted when empty) }
nlohmann::json annotation_to_json(const VideoAnnotation& a);
VideoAnnotation annotation_from_json(const nlohmann::json& j);

// Canonical text form: two-space indented JSON plus trailing newline.
std::string serialize_annotation(const VideoAnnotation& a);
VideoAnnotation parse_annotation(std::string_view text);

nlohmann::json point_to_json(const PointPrompt& p);
PointPrompt point_from_json(const nlohmann::json& j);

}  // namespace xvd
