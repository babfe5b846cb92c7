#include "xvd/annotation_io.hpp"

namespace xvd {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::Malformed, what); }

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return require(j, key).get<T>();
  } catch (const json::exception& e) {
    malformed(std::string("field '") + key + "': " + e.what());
  }
}

json points_to_json(const std::vector<PointPrompt>& points) {
  json arr = json::array();
  for (const auto& p : points) arr.push_back(point_to_json(p));
  return arr;
}

std::vector<PointPrompt> points_from_json(const json& j) {
  if (!j.is_array()) malformed("point list must be an array");
  std::vector<PointPrompt> out;
  for (const auto& p : j) out.push_back(point_from_json(p));
  return out;
}

}  // namespace

json point_to_json(const PointPrompt& p) {
  return json::array({p.frame, p.x, p.y, p.label == PointLabel::Positive ? 1 : 0});
}

PointPrompt point_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) malformed("point must be [frame, x, y, label]");
  for (const auto& v : j)
    if (!v.is_number_integer()) malformed("point entries must be integers");
  const int label = j[3].get<int>();
  if (label != 0 && label != 1) malformed("point label must be 0 or 1");
  return PointPrompt{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(),
                     label == 1 ? PointLabel::Positive : PointLabel::Negative};
}

json annotation_to_json(const VideoAnnotation& a) {
  json j;
  j["video_id"] = a.video_id;
  j["source"] = a.source;
  j["fps"] = a.fps;
  j["width"] = a.width;
  j["height"] = a.height;
  j["frame_count"] = a.frame_count;
  j["verdict"] = std::string(to_string(a.verdict));
  j["anchor_type"] = a.anchor ? json(std::string(to_string(*a.anchor))) : json(nullptr);
  j["real_explanation"] = a.real_explanation ? json(*a.real_explanation) : json(nullptr);
  json defects = json::array();
  for (const auto& d : a.defects) {
    json jd;
    json cats = json::array();
    for (auto c : d.categories.items()) cats.push_back(std::string(to_string(c)));
    jd["defect_cate"] = std::move(cats);
    jd["frame_range"] = json::array({d.frame_range.start_frame, d.frame_range.end_frame});
    if (a.fps > 0.0) jd["timestamp"] = format_timestamp(frames_to_timespan(d.frame_range, a.fps));
    jd["point"] = points_to_json(d.points);
    jd["explanation"] = d.explanation;
    if (!d.attempts.empty()) {
      json attempts = json::array();
      for (const auto& attempt : d.attempts) attempts.push_back(points_to_json(attempt));
      jd["attempts"] = std::move(attempts);
    }
    defects.push_back(std::move(jd));
  }
  j["defects"] = std::move(defects);
  return j;
}

VideoAnnotation annotation_from_json(const json& j) {
  if (!j.is_object()) malformed("annotation must be an object");
  VideoAnnotation a;
  a.video_id = get_as<std::string>(j, "video_id");
  a.source = get_as<std::string>(j, "source");
  a.fps = get_as<double>(j, "fps");
  a.width = get_as<int>(j, "width");
  a.height = get_as<int>(j, "height");
  a.frame_count = get_as<int>(j, "frame_count");
  const auto verdict = get_as<std::string>(j, "verdict");
  auto v = parse_verdict(verdict);
  if (!v) malformed("unknown verdict '" + verdict + "'");
  a.verdict = *v;
  if (auto it = j.find("anchor_type"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) malformed("anchor_type must be a string");
    auto anchor = parse_anchor_type(it->get<std::string>());
    if (!anchor) malformed("unknown anchor_type '" + it->get<std::string>() + "'");
    a.anchor = *anchor;
  }
  if (auto it = j.find("real_explanation"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) malformed("real_explanation must be a string");
    a.real_explanation = it->get<std::string>();
  }
  if (auto it = j.find("defects"); it != j.end()) {
    if (!it->is_array()) malformed("defects must be an array");
    for (const auto& jd : *it) {
      if (!jd.is_object()) malformed("defect must be an object");
      DefectRecord d;
      const auto& cats = require(jd, "defect_cate");
      if (!cats.is_array()) malformed("defect_cate must be an array");
      for (const auto& c : cats) {
        if (!c.is_string()) malformed("defect_cate entries must be strings");
        auto cat = parse_defect_category(c.get<std::string>());
        if (!cat) malformed("unknown defect category '" + c.get<std::string>() + "'");
        d.categories.insert(*cat);
      }
      const auto& range = require(jd, "frame_range");
      if (!range.is_array() || range.size() != 2 || !range[0].is_number_integer() || !range[1].is_number_integer())
        malformed("frame_range must be [start, end]");
      d.frame_range = FrameRange{range[0].get<int>(), range[1].get<int>()};
      d.points = points_from_json(require(jd, "point"));
      d.explanation = get_as<std::string>(jd, "explanation");
      if (auto at = jd.find("attempts"); at != jd.end()) {
        if (!at->is_array()) malformed("attempts must be an array");
        for (const auto& attempt : *at) d.attempts.push_back(points_from_json(attempt));
      }
      a.defects.push_back(std::move(d));
    }
  }
  return a;
}

std::string serialize_annotation(const VideoAnnotation& a) { return annotation_to_json(a).dump(2) + "\n"; }

VideoAnnotation parse_annotation(std::string_view text) {
  json j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) malformed("annotation record is not valid JSON");
  return annotation_from_json(j);
}

}  // namespace xvd
