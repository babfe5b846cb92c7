#include "xvd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

namespace xvd::eval {

std::uint64_t Percentage::tenths() const {
  if (den == 0) return 0;
  // round(1000 * num / den), half-up, in integers
  return (2000 * num + den) / (2 * den);
}

std::string Percentage::format() const {
  const std::uint64_t t = tenths();
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

std::vector<std::string> source_order(const std::vector<DetectionRecord>& records) {
  std::vector<std::string> out;
  bool has_real = false;
  for (const auto& r : records) {
    if (r.source == kRealSource) {
      has_real = true;
      continue;
    }
    if (std::find(out.begin(), out.end(), r.source) == out.end()) out.push_back(r.source);
  }
  if (has_real) out.emplace_back(kRealSource);
  return out;
}

RecallResult recall_by_source(const std::vector<DetectionRecord>& records, const std::vector<std::string>& sources) {
  std::map<std::string, Percentage> counts;
  for (const auto& r : records) {
    auto& p = counts.try_emplace(r.source, Percentage{0, 0}).first->second;
    p.num += r.correct() ? 1 : 0;
    p.den += 1;
  }
  RecallResult res;
  for (const auto& s : sources.empty() ? source_order(records) : sources) {
    const auto it = counts.find(s);
    if (it == counts.end()) {
      res.warnings.push_back("no records for source '" + s + "'; recall omitted");
      continue;
    }
    res.by_source.push_back({s, it->second});
  }
  return res;
}

Percentage overall_accuracy(const std::vector<DetectionRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::UndefinedMetric, "accuracy of an empty record set");
  Percentage p{0, records.size()};
  for (const auto& r : records) p.num += r.correct() ? 1 : 0;
  return p;
}

Percentage explanation_precision(const std::vector<JudgedCue>& judged) {
  if (judged.empty()) throw Error(ErrorKind::UndefinedMetric, "precision of an empty judgment set");
  Percentage p{0, judged.size()};
  for (const auto& j : judged) p.num += j.valid ? 1 : 0;
  return p;
}

DiversityResult explanation_diversity(const std::map<std::string, std::set<std::string>>& items) {
  DiversityResult res;
  std::set<std::string> all;
  for (const auto& [model, set] : items) all.insert(set.begin(), set.end());
  res.union_size = all.size();
  if (all.empty()) res.warnings.push_back("no matched ground-truth items across models; diversity is zero");
  for (const auto& [model, set] : items) res.by_model[model] = Percentage{all.empty() ? 0 : set.size(), all.empty() ? 1 : all.size()};
  return res;
}

void MatchConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must be in (0, 1]");
  if (!(radius >= 0.0 && radius <= 1414.0)) throw Error(ErrorKind::InvalidArgument, "radius must be in [0, 1414]");
}

double temporal_iou(TimeSpan a, TimeSpan b) {
  const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  const double uni = std::max(a.end_s, b.end_s) - std::min(a.start_s, b.start_s);
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

std::string gt_item_id(const std::string& video_id, std::size_t defect_index) {
  return video_id + "#" + std::to_string(defect_index);
}

std::vector<std::size_t> auto_match(const EvidenceBlock& block, const VideoAnnotation& gt, const MatchConfig& cfg) {
  std::vector<std::size_t> out;
  if (!block.timestamp || !block.timestamp->span) return out;
  const TimeSpan span = *block.timestamp->span;
  for (std::size_t i = 0; i < gt.defects.size(); ++i) {
    const auto& d = gt.defects[i];
    if (cfg.require_category && (!block.categories || !block.categories->intersects(d.categories))) continue;
    if (temporal_iou(span, frames_to_timespan(d.frame_range, gt.fps)) < cfg.tau) continue;
    if (block.points && !block.points->empty()) {
      const NormalizedPoint target = normalize_point(training_point_view(d), gt.width, gt.height);
      const bool near = std::any_of(block.points->begin(), block.points->end(), [&](const Point2d& p) {
        return std::hypot(static_cast<double>(p.x - target.x), static_cast<double>(p.y - target.y)) <= cfg.radius;
      });
      if (!near) continue;
    }
    out.push_back(i);
  }
  return out;
}

std::vector<CueMatch> match_responses(const std::vector<ModelResponse>& responses,
                                      const std::map<std::string, VideoAnnotation>& annotations,
                                      const MatchConfig& cfg, std::vector<std::string>* warnings) {
  cfg.validate();
  std::vector<CueMatch> out;
  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(std::move(w));
  };
  for (const auto& r : responses) {
    const auto ann = annotations.find(r.video_id);
    if (ann == annotations.end()) {
      warn("no annotation for video '" + r.video_id + "'");
      continue;
    }
    const ParseOutcome parsed = parse_trace(r.text, ParseMode::Lenient);
    if (!parsed.trace) {
      warn("unparseable response for " + r.model + "/" + r.video_id);
      continue;
    }
    const auto& ev = parsed.trace->evidence;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      if (ev[i].is_placeholder()) continue;
      CueMatch m{r.model, r.video_id, static_cast<int>(i), {}};
      for (std::size_t d : auto_match(ev[i], ann->second, cfg)) m.gt_items.push_back(gt_item_id(r.video_id, d));
      out.push_back(std::move(m));
    }
  }
  return out;
}

MetricsReport build_report(const std::vector<DetectionRecord>& records, const std::vector<JudgedCue>& judged,
                           const std::vector<CueMatch>& matches, const MatchConfig& cfg) {
  cfg.validate();
  MetricsReport rep;
  rep.config = cfg;
  rep.sources = source_order(records);

  std::vector<std::string> models;
  auto note_model = [&](const std::string& m) {
    if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
  };
  for (const auto& r : records) note_model(r.model);
  for (const auto& j : judged) note_model(j.model);
  for (const auto& m : matches) note_model(m.model);

  using CueKey = std::tuple<std::string, std::string, int>;
  std::map<CueKey, bool> validity;
  std::set<std::string> judged_models;
  for (const auto& j : judged) {
    validity[{j.model, j.video_id, j.cue_index}] = j.valid;
    judged_models.insert(j.model);
  }
  std::map<std::string, std::set<std::string>> items;
  for (const auto& m : models) items[m];
  for (const auto& m : matches) {
    if (judged_models.count(m.model)) {
      const auto v = validity.find({m.model, m.video_id, m.cue_index});
      if (v == validity.end() || !v->second) continue;
    }
    items[m.model].insert(m.gt_items.begin(), m.gt_items.end());
  }
  const DiversityResult div = explanation_diversity(items);
  const bool any_matches = !matches.empty();
  if (any_matches) rep.warnings.insert(rep.warnings.end(), div.warnings.begin(), div.warnings.end());

  for (const auto& model : models) {
    ReportRow row;
    row.model = model;
    std::vector<DetectionRecord> mine;
    for (const auto& r : records)
      if (r.model == model) mine.push_back(r);
    const RecallResult rec = recall_by_source(mine, rep.sources);
    for (const auto& w : rec.warnings) rep.warnings.push_back(model + ": " + w);
    for (const auto& s : rep.sources) {
      const auto it = std::find_if(rec.by_source.begin(), rec.by_source.end(), [&](const SourceRecall& x) { return x.source == s; });
      row.recalls.push_back(it == rec.by_source.end() ? std::nullopt : std::optional<Percentage>(it->recall));
    }
    if (!mine.empty()) row.average = overall_accuracy(mine);

    std::vector<JudgedCue> mj;
    for (const auto& j : judged)
      if (j.model == model) mj.push_back(j);
    if (!mj.empty()) row.precision = explanation_precision(mj);
    if (any_matches) row.diversity = div.by_model.at(model);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

std::string cell(const std::optional<Percentage>& p) { return p ? p->format() : "n/a"; }

nlohmann::json json_cell(const std::optional<Percentage>& p) {
  if (!p) return nullptr;
  return {{"value", p->format()}, {"num", p->num}, {"den", p->den}};
}

}  // namespace

std::string format_report_text(const MetricsReport& report) {
  std::ostringstream out;
  out << "Model |";
  for (const auto& s : report.sources) out << ' ' << s;
  out << " | Avg | Precision Diversity\n";
  for (const auto& row : report.rows) {
    out << row.model << " |";
    for (const auto& r : row.recalls) out << ' ' << cell(r);
    out << " | " << cell(row.average) << " | " << cell(row.precision) << ' ' << cell(row.diversity) << '\n';
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "# match: tau=%.3g radius=%.4g require_category=%s\n", report.config.tau,
                report.config.radius, report.config.require_category ? "true" : "false");
  out << buf;
  for (const auto& w : report.warnings) out << "# warning: " << w << '\n';
  return out.str();
}

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json recalls = nlohmann::json::object();
    for (std::size_t i = 0; i < report.sources.size(); ++i) recalls[report.sources[i]] = json_cell(row.recalls[i]);
    rows.push_back({{"model", row.model},
                    {"recall", recalls},
                    {"accuracy", json_cell(row.average)},
                    {"precision", json_cell(row.precision)},
                    {"diversity", json_cell(row.diversity)}});
  }
  return {{"sources", report.sources},
          {"rows", rows},
          {"match", {{"tau", report.config.tau}, {"radius", report.config.radius}, {"require_category", report.config.require_category}}},
          {"warnings", report.warnings}};
}

namespace {

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(line, n);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Malformed, "line " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind == ErrorKind::Malformed) throw;
      throw Error(ErrorKind::Malformed, "line " + std::to_string(n) + ": " + e.what());
    }
  }
}

Verdict verdict_field(const nlohmann::json& j, const char* key) {
  const auto v = parse_verdict(j.at(key).get<std::string>());
  if (!v) throw Error(ErrorKind::Malformed, std::string("unknown verdict in '") + key + "'");
  return *v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
  }
  return out;
}

int parse_int(const std::string& s, std::size_t line) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw Error(ErrorKind::Malformed, "line " + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}

}  // namespace

std::vector<DetectionRecord> read_detections_jsonl(std::istream& in) {
  std::vector<DetectionRecord> out;
  for_each_line(in, [&](const std::string& line, std::size_t n) {
    const auto j = nlohmann::json::parse(line);
    DetectionRecord r;
    r.model = j.value("model", std::string(kDefaultModel));
    r.video_id = j.at("video_id").get<std::string>();
    r.source = j.at("source").get<std::string>();
    r.truth = verdict_field(j, "truth");
    r.prediction = verdict_field(j, "prediction");
    if ((r.truth == Verdict::Real) != (r.source == kRealSource))
      throw Error(ErrorKind::Malformed, "line " + std::to_string(n) + ": truth verdict disagrees with source");
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<JudgedCue> read_judged_csv(std::istream& in) {
  std::vector<JudgedCue> out;
  std::vector<std::string> header;
  for_each_line(in, [&](const std::string& line, std::size_t n) {
    auto fields = split_csv(line);
    if (header.empty()) {
      const bool is_header = std::find(fields.begin(), fields.end(), "video_id") != fields.end();
      header = is_header ? fields : std::vector<std::string>{"video_id", "cue_index", "valid"};
      if (fields.size() == 4 && !is_header) header = {"model", "video_id", "cue_index", "valid"};
      if (is_header) return;
    }
    if (fields.size() != header.size())
      throw Error(ErrorKind::Malformed, "line " + std::to_string(n) + ": expected " + std::to_string(header.size()) + " fields");
    JudgedCue c;
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto& h = header[i];
      if (h == "model") {
        c.model = fields[i];
      } else if (h == "video_id") {
        c.video_id = fields[i];
      } else if (h == "cue_index") {
        c.cue_index = parse_int(fields[i], n);
      } else if (h == "valid") {
        const int v = parse_int(fields[i], n);
        if (v != 0 && v != 1) throw Error(ErrorKind::Malformed, "line " + std::to_string(n) + ": valid must be 0 or 1");
        c.valid = v == 1;
      } else {
        throw Error(ErrorKind::Malformed, "unknown column '" + h + "'");
      }
    }
    out.push_back(std::move(c));
  });
  return out;
}

std::vector<CueMatch> read_matches_jsonl(std::istream& in) {
  std::vector<CueMatch> out;
  for_each_line(in, [&](const std::string& line, std::size_t) {
    const auto j = nlohmann::json::parse(line);
    CueMatch m;
    m.model = j.value("model", std::string(kDefaultModel));
    m.video_id = j.at("video_id").get<std::string>();
    m.cue_index = j.at("cue_index").get<int>();
    m.gt_items = j.at("gt_items").get<std::vector<std::string>>();
    out.push_back(std::move(m));
  });
  return out;
}

std::vector<ModelResponse> read_responses_jsonl(std::istream& in) {
  std::vector<ModelResponse> out;
  for_each_line(in, [&](const std::string& line, std::size_t) {
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.value("model", std::string(kDefaultModel)), j.at("video_id").get<std::string>(),
                   j.at("response").get<std::string>()});
  });
  return out;
}

}  // namespace xvd::eval
