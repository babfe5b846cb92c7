#include "xvd/distill.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace xvd {

const std::string& default_label_definitions() {
  static const std::string text =
      "Anchor types:\n"
      "- natural recorded video: camera footage with little or no editing.\n"
      "- handcrafted video: footage with heavy post-production such as visual effects, animation or game capture; "
      "physically implausible motion, space and lighting are tolerated more readily.\n"
      "Defect categories:\n"
      "- Object Inconsistency: an object's shape, size, colour or details change between frames without cause.\n"
      "- Texture Jitter: surface detail shimmers, crawls or drifts from frame to frame.\n"
      "- Interaction Anomaly: touching or overlapping objects merge, stick together or lose their boundary.\n"
      "- Movement Anomaly: motion that is jerky, warped or physically impossible.\n"
      "- Space Anomaly: parallax or scene geometry that breaks as the camera moves.\n"
      "- Lighting Anomaly: shadows, highlights or brightness that disagree with the light sources.\n";
  return text;
}

const std::string& default_task_prompt() {
  static const std::string text =
      "Decide whether this video is AI-generated. Pick the anchor type first, then look for defects using the "
      "definitions below.\n" +
      default_label_definitions() +
      "Reason step by step inside <think></think>. Inside <evidence></evidence> give one group per defect: "
      "<defect_cate></defect_cate>, <timestamp></timestamp>, <explanation></explanation>, "
      "<located_frame></located_frame> and <point_2d></point_2d>, with points as (x, y) on a 0-1000 grid. For a "
      "real video fill only <explanation></explanation> and write None in the other tags. Finish with "
      "<answer>AI generated video</answer> or <answer>Real video</answer>.";
  return text;
}

namespace {

std::vector<std::size_t> chronological_order(const std::vector<DefectRecord>& defects) {
  std::vector<std::size_t> order(defects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return defects[a].frame_range.start_frame < defects[b].frame_range.start_frame;
  });
  return order;
}

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void require_valid(const VideoAnnotation& a) {
  const auto violations = validate_annotation(a);
  if (violations.empty()) return;
  std::string msg = "annotation '" + a.video_id + "' is invalid:";
  for (const auto& v : violations) msg += " " + v.field + "=" + v.rule;
  throw Error(ErrorKind::InvalidArgument, msg);
}

std::string evidence_block_text(const ReasoningTrace& trace) {
  // Serialize, then cut out the evidence section.
  const std::string full = serialize_trace(trace);
  const auto b = full.find("<evidence>");
  const auto e = full.find("</evidence>");
  return full.substr(b, e + std::string("</evidence>").size() - b);
}

std::string describe_block(const EvidenceBlock& b, std::size_t index) {
  std::ostringstream os;
  os << "Defect " << index + 1 << ": " << format_categories(*b.categories) << " visible during "
     << format_timestamp(*b.timestamp->span) << "; the clearest instance is on frame " << *b.located_frame
     << " near " << format_points(*b.points) << ".";
  return os.str();
}

}  // namespace

ReasoningTrace ground_truth_trace(const VideoAnnotation& a) {
  ReasoningTrace t;
  t.answer = a.verdict;
  if (a.verdict == Verdict::Real) {
    EvidenceBlock b;
    b.explanation = trimmed(a.real_explanation.value_or(""));
    t.evidence.push_back(std::move(b));
    t.think = "No generation defect survives a frame-by-frame check of motion, texture, lighting and object "
              "identity, so the clip is treated as authentic footage.";
    return t;
  }
  std::ostringstream think;
  think << "The clip is anchored to " << to_string(a.anchor.value_or(AnchorType::NaturalRecorded)) << ". Scanning "
        << a.frame_count << " frames at " << a.fps << " fps surfaces " << a.defects.size() << " defect"
        << (a.defects.size() == 1 ? "" : "s") << ".";
  for (auto idx : chronological_order(a.defects)) {
    const auto& d = a.defects[idx];
    const PointPrompt p = training_point_view(d);
    const NormalizedPoint n = normalize_point(p, a.width, a.height);
    EvidenceBlock b;
    b.categories = d.categories;
    const std::string ts = format_timestamp(frames_to_timespan(d.frame_range, a.fps));
    b.timestamp = Timestamp{ts, parse_canonical_timestamp(ts)};
    b.explanation = trimmed(d.explanation);
    b.located_frame = p.frame;
    b.points = std::vector<Point2d>{{n.x, n.y}};
    think << " " << describe_block(b, t.evidence.size());
    t.evidence.push_back(std::move(b));
  }
  think << " Together these defects are decisive evidence of generation.";
  t.think = think.str();
  return t;
}

DistillRequest build_distill_request(const VideoAnnotation& a, const std::string& definitions) {
  require_valid(a);
  DistillRequest r;
  r.video_id = a.video_id;
  r.definitions = definitions;
  const ReasoningTrace gt = ground_truth_trace(a);
  r.evidence = evidence_block_text(gt);
  std::ostringstream ins;
  ins << "You are given a video together with its ground-truth forensic evidence. Reason step by step inside "
         "<think></think> and derive each listed cue from what is visible in the video; do not invent cues that are "
         "not listed. Reproduce every evidence tag exactly as given. Only the text inside <explanation></explanation> "
         "may be expanded.";
  if (a.verdict == Verdict::Real)
    ins << " This is a real video: explain why it is authentic inside <explanation></explanation> and write None in "
           "<defect_cate>, <timestamp>, <located_frame> and <point_2d>.";
  ins << " End with <answer>" << to_string(a.verdict) << "</answer>.";
  r.instruction = ins.str();

  std::ostringstream text;
  text << r.instruction << "\n\nDefinitions:\n" << definitions << "\nVideo: " << a.video_id << "\n";
  if (a.anchor) text << "<anchor_type>" << to_string(*a.anchor) << "</anchor_type>\n";
  text << "Ground-truth evidence:\n" << r.evidence << "\n<answer>" << to_string(a.verdict) << "</answer>\n";
  r.text = text.str();
  return r;
}

ReasoningTrace run_distillation(LlmClient& client, const DistillRequest& request) {
  const std::string reply = client.complete(request.text);
  auto outcome = parse_trace(reply, ParseMode::Strict);
  if (!outcome.trace) {
    const std::string why = outcome.diagnostics.empty() ? "unparseable" : outcome.diagnostics.front().message;
    throw Error(ErrorKind::Malformed, "distilled trace for '" + request.video_id + "' does not parse: " + why);
  }
  return std::move(*outcome.trace);
}

std::string StubDistillClient::complete(const std::string& request) {
  const auto eb = request.find("<evidence>");
  const auto ee = request.find("</evidence>");
  const auto ab = request.find("<answer>", ee == std::string::npos ? 0 : ee);
  const auto ae = request.find("</answer>", ab == std::string::npos ? 0 : ab);
  if (eb == std::string::npos || ee == std::string::npos || ab == std::string::npos || ae == std::string::npos)
    throw Error(ErrorKind::Malformed, "request carries no ground-truth evidence");
  const std::string evidence = request.substr(eb, ee + 11 - eb);
  const std::string answer = request.substr(ab, ae + 9 - ab);
  std::string anchor = "an unspecified anchor";
  if (auto at = request.find("<anchor_type>"); at != std::string::npos) {
    const auto end = request.find("</anchor_type>", at);
    if (end != std::string::npos) anchor = request.substr(at + 13, end - at - 13);
  }
  const bool real = answer.find(std::string(to_string(Verdict::Real))) != std::string::npos;
  std::string think = real ? "Motion, texture, lighting and object identity stay consistent in every frame, which "
                             "points to authentic footage."
                           : "Anchoring the clip to " + anchor +
                                 ", I walk through the frames, localize each listed defect in time and space, "
                                 "confirm its category and explain why it reveals generation.";
  return "<think>" + think + "</think>\n" + evidence + "\n" + answer + "\n";
}

VerifyReport verify_trace_against_gt(const ReasoningTrace& trace, const VideoAnnotation& a) {
  VerifyReport report;
  auto diff = [&](std::optional<std::size_t> block, std::string field, std::string expected, std::string actual) {
    report.diffs.push_back({block, std::move(field), std::move(expected), std::move(actual)});
  };
  if (trace.answer != a.verdict) diff(std::nullopt, "answer", std::string(to_string(a.verdict)), std::string(to_string(trace.answer)));

  if (a.verdict == Verdict::Real) {
    for (std::size_t i = 0; i < trace.evidence.size(); ++i)
      if (!trace.evidence[i].is_placeholder()) diff(i, "evidence", "None placeholders", "defect evidence");
    return report;
  }

  if (trace.evidence.size() != a.defects.size()) {
    diff(std::nullopt, "block_count", std::to_string(a.defects.size()), std::to_string(trace.evidence.size()));
    return report;
  }

  std::vector<std::size_t> blocks(trace.evidence.size());
  std::iota(blocks.begin(), blocks.end(), std::size_t{0});
  auto start_of = [&](std::size_t i) {
    const auto& ts = trace.evidence[i].timestamp;
    return ts && ts->span ? ts->span->start_s : 0.0;
  };
  std::stable_sort(blocks.begin(), blocks.end(), [&](std::size_t x, std::size_t y) { return start_of(x) < start_of(y); });
  const auto defects = chronological_order(a.defects);

  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const std::size_t bi = blocks[k];
    const EvidenceBlock& b = trace.evidence[bi];
    const DefectRecord& d = a.defects[defects[k]];

    const std::string want_cats = format_categories(d.categories);
    const std::string got_cats = b.categories ? format_categories(*b.categories) : "None";
    if (want_cats != got_cats) diff(bi, "defect_cate", want_cats, got_cats);

    const std::string want_ts = format_timestamp(frames_to_timespan(d.frame_range, a.fps));
    const std::string got_ts = b.timestamp ? (b.timestamp->span ? format_timestamp(*b.timestamp->span) : b.timestamp->raw) : "None";
    if (want_ts != got_ts) diff(bi, "timestamp", want_ts, got_ts);

    const PointPrompt p = training_point_view(d);
    const std::string got_frame = b.located_frame ? std::to_string(*b.located_frame) : "None";
    if (got_frame != std::to_string(p.frame)) diff(bi, "located_frame", std::to_string(p.frame), got_frame);

    const NormalizedPoint n = normalize_point(p, a.width, a.height);
    const std::string want_pt = format_points({{n.x, n.y}});
    const bool point_ok = b.points && b.points->size() == 1 && std::abs((*b.points)[0].x - n.x) <= 1 &&
                          std::abs((*b.points)[0].y - n.y) <= 1;
    if (!point_ok) diff(bi, "point_2d", want_pt, b.points ? format_points(*b.points) : "None");
  }
  return report;
}

std::vector<VideoAnnotation> split_sample(const VideoAnnotation& a, int max_cues) {
  if (max_cues <= 0) throw Error(ErrorKind::InvalidArgument, "max_cues must be positive");
  if (a.verdict == Verdict::Real || a.defects.empty()) return {a};
  const auto order = chronological_order(a.defects);
  std::vector<VideoAnnotation> views;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(max_cues)) {
    VideoAnnotation view = a;
    view.defects.clear();
    for (std::size_t j = i; j < order.size() && j < i + static_cast<std::size_t>(max_cues); ++j)
      view.defects.push_back(a.defects[order[j]]);
    views.push_back(std::move(view));
  }
  return views;
}

std::vector<SftRecord> emit_sft_records(const std::vector<VideoAnnotation>& views, const std::string& task_prompt) {
  std::vector<SftRecord> out;
  out.reserve(views.size());
  for (const auto& v : views) {
    require_valid(v);
    const ReasoningTrace trace = ground_truth_trace(v);
    SftRecord r;
    r.video_id = v.video_id;
    r.prompt = task_prompt;
    r.target = serialize_trace(trace);
    r.label = binary_label(v.verdict);
    auto reparsed = parse_trace(r.target, ParseMode::Strict);
    if (!reparsed.trace || !verify_trace_against_gt(*reparsed.trace, v).pass())
      throw Error(ErrorKind::Unserializable, "target for '" + v.video_id + "' does not re-verify");
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json sft_to_json(const SftRecord& r) {
  return nlohmann::json{{"video_id", r.video_id}, {"prompt", r.prompt}, {"target", r.target}, {"label", r.label}};
}

}  // namespace xvd
