#include "xvd/tagseq.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace xvd {

bool ParseOutcome::has_errors() const {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

std::size_t ParseOutcome::warning_count() const {
  return static_cast<std::size_t>(std::count_if(diagnostics.begin(), diagnostics.end(),
                                                [](const Diagnostic& d) { return d.severity == Severity::Warning; }));
}

namespace {

enum class Tag : std::uint8_t { Think, Evidence, Answer, DefectCate, Timestamp, Explanation, LocatedFrame, Point2d };

constexpr std::array<std::string_view, 8> kTagNames = {
    "think", "evidence", "answer", "defect_cate", "timestamp", "explanation", "located_frame", "point_2d",
};

// Canonical order of the leaf tags inside one evidence block.
constexpr std::array<Tag, 5> kBlockOrder = {Tag::DefectCate, Tag::Timestamp, Tag::Explanation, Tag::LocatedFrame,
                                            Tag::Point2d};

std::string_view tag_name(Tag t) { return kTagNames[static_cast<std::size_t>(t)]; }
bool is_leaf(Tag t) { return static_cast<int>(t) >= static_cast<int>(Tag::DefectCate); }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool iequals(std::string_view a, std::string_view b) { return lower(a) == lower(b); }

bool is_none(std::string_view s) { return iequals(trim(s), "none"); }

enum class TokKind { Open, Close, Text };

struct Token {
  TokKind kind = TokKind::Text;
  Tag tag = Tag::Think;
  std::size_t begin = 0;  // byte range of the token in the input
  std::size_t end = 0;
  bool canonical = true;  // tag spelled exactly as the canonical lowercase name
};

// Recognizes "<name>" and "</name>" for the eight known tags. Names compare case-insensitively
// with '-' and ' ' standing in for '_'; anything else stays text.
std::optional<Token> lex_tag(std::string_view text, std::size_t pos) {
  constexpr std::size_t kMaxName = 24;
  std::size_t i = pos + 1;
  bool closing = false;
  if (i < text.size() && text[i] == '/') {
    closing = true;
    ++i;
  }
  const std::size_t name_begin = i;
  while (i < text.size() && i - name_begin <= kMaxName && text[i] != '>') {
    const char c = text[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ' ')) return std::nullopt;
    ++i;
  }
  if (i >= text.size() || text[i] != '>' || i == name_begin) return std::nullopt;
  const std::string_view raw = text.substr(name_begin, i - name_begin);
  std::string folded;
  for (char c : raw) folded.push_back(c == '-' || c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (std::size_t t = 0; t < kTagNames.size(); ++t) {
    if (folded == kTagNames[t]) {
      Token tok;
      tok.kind = closing ? TokKind::Close : TokKind::Open;
      tok.tag = static_cast<Tag>(t);
      tok.begin = pos;
      tok.end = i + 1;
      tok.canonical = raw == kTagNames[t];
      return tok;
    }
  }
  return std::nullopt;
}

std::vector<Token> lex(std::string_view text) {
  std::vector<Token> out;
  std::size_t text_begin = 0;
  std::size_t pos = 0;
  auto flush = [&](std::size_t upto) {
    if (upto > text_begin) out.push_back(Token{TokKind::Text, Tag::Think, text_begin, upto, true});
  };
  while (pos < text.size()) {
    if (text[pos] == '<') {
      if (auto tok = lex_tag(text, pos)) {
        flush(pos);
        out.push_back(*tok);
        pos = tok->end;
        text_begin = pos;
        continue;
      }
    }
    ++pos;
  }
  flush(text.size());
  return out;
}

// ---------------------------------------------------------------------------------------
// Field content parsers shared by both modes.

struct FieldError {
  std::string message;
};

template <typename T>
struct Field {
  std::optional<T> value;  // nullopt with error empty = "None"
  std::string error;
  std::string repair;      // lenient-only repair message
};

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

Field<CategorySet> strict_categories(std::string_view content) {
  Field<CategorySet> f;
  if (is_none(content)) return f;
  CategorySet set;
  std::size_t start = 0;
  const std::string_view body = trim(content);
  while (start <= body.size()) {
    std::size_t comma = body.find(',', start);
    if (comma == std::string_view::npos) comma = body.size();
    const std::string_view item = trim(body.substr(start, comma - start));
    auto cat = parse_defect_category(item);
    if (!cat) {
      f.error = "unknown defect category '" + std::string(item) + "'";
      return f;
    }
    set.insert(*cat);
    start = comma + 1;
  }
  f.value = set;
  return f;
}

std::optional<DefectCategory> fuzzy_category(std::string_view item) {
  if (auto c = parse_defect_category(item)) return c;
  const std::string l = lower(item);
  struct Cue {
    const char* word;
    DefectCategory cat;
  };
  static constexpr Cue cues[] = {
      {"object", DefectCategory::ObjectInconsistency}, {"inconsist", DefectCategory::ObjectInconsistency},
      {"texture", DefectCategory::TextureJitter},      {"jitter", DefectCategory::TextureJitter},
      {"flicker", DefectCategory::TextureJitter},      {"interaction", DefectCategory::InteractionAnomaly},
      {"movement", DefectCategory::MovementAnomaly},   {"motion", DefectCategory::MovementAnomaly},
      {"space", DefectCategory::SpaceAnomaly},         {"spatial", DefectCategory::SpaceAnomaly},
      {"light", DefectCategory::LightingAnomaly},      {"shadow", DefectCategory::LightingAnomaly},
  };
  for (const auto& cue : cues)
    if (l.find(cue.word) != std::string::npos) return cue.cat;
  return std::nullopt;
}

Field<CategorySet> lenient_categories(std::string_view content) {
  Field<CategorySet> f = strict_categories(content);
  if (f.error.empty()) return f;
  f.error.clear();
  CategorySet set;
  std::string dropped;
  std::size_t start = 0;
  const std::string_view body = trim(content);
  while (start <= body.size()) {
    std::size_t sep = body.find_first_of(",;/|&\n", start);
    if (sep == std::string_view::npos) sep = body.size();
    std::string_view item = trim(body.substr(start, sep - start));
    while (!item.empty() && (item.front() == '#' || item.front() == '-' || item.front() == '*')) item = trim(item.substr(1));
    if (!item.empty()) {
      if (auto cat = fuzzy_category(item))
        set.insert(*cat);
      else
        dropped += (dropped.empty() ? "'" : ", '") + std::string(item) + "'";
    }
    start = sep + 1;
  }
  if (set.empty()) {
    f.repair = "no recognizable defect category; treated as None";
    return f;
  }
  f.value = set;
  f.repair = dropped.empty() ? "defect categories coerced to canonical names"
                             : "defect categories coerced; dropped " + dropped;
  return f;
}

Field<Timestamp> strict_timestamp(std::string_view content) {
  Field<Timestamp> f;
  if (is_none(content)) return f;
  const std::string_view body = trim(content);
  auto span = parse_canonical_timestamp(body);
  if (!span) {
    f.error = "timestamp '" + std::string(body) + "' is not of the form 0.00s-0.00s";
    return f;
  }
  f.value = Timestamp{std::string(body), span};
  return f;
}

// Accepts "1s-2s", "1.0 s to 2.5 s", "00:01.5-00:03", ...
std::vector<double> scan_times(std::string_view s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    double total = 0.0;
    bool ok = true;
    for (;;) {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + j, v);
      if (ec != std::errc()) ok = false;
      const std::size_t consumed = static_cast<std::size_t>(ptr - (s.data() + i));
      j = i + std::max<std::size_t>(consumed, 1);
      total = total * 60.0 + v;
      i = j;
      if (i + 1 < s.size() && s[i] == ':' && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
        ++i;
        continue;
      }
      break;
    }
    if (ok && std::isfinite(total)) out.push_back(total);
  }
  return out;
}

Field<Timestamp> lenient_timestamp(std::string_view content) {
  Field<Timestamp> f = strict_timestamp(content);
  if (f.error.empty()) return f;
  f.error.clear();
  const std::string_view body = trim(content);
  const auto times = scan_times(body);
  Timestamp ts{std::string(body), std::nullopt};
  if (times.size() == 2) {
    ts.span = TimeSpan{times[0], times[1]};
    f.repair = "timestamp '" + std::string(body) + "' read as " + format_timestamp(*ts.span);
  } else {
    f.repair = "timestamp '" + std::string(body) + "' could not be read as a time span";
  }
  f.value = std::move(ts);
  return f;
}

Field<int> strict_frame(std::string_view content) {
  Field<int> f;
  if (is_none(content)) return f;
  const std::string_view body = trim(content);
  int v = 0;
  if (body.empty() || !std::all_of(body.begin(), body.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      !parse_int(body, v)) {
    f.error = "located_frame '" + std::string(body) + "' is not a frame index";
    return f;
  }
  f.value = v;
  return f;
}

Field<int> lenient_frame(std::string_view content) {
  Field<int> f = strict_frame(content);
  if (f.error.empty()) return f;
  f.error.clear();
  const std::string_view body = trim(content);
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(body[i]))) continue;
    std::size_t j = i;
    while (j < body.size() && std::isdigit(static_cast<unsigned char>(body[j]))) ++j;
    int v = 0;
    if (parse_int(body.substr(i, j - i), v)) {
      f.value = v;
      f.repair = "located_frame '" + std::string(body) + "' read as " + std::to_string(v);
      return f;
    }
    break;
  }
  f.repair = "located_frame '" + std::string(body) + "' unreadable; treated as None";
  return f;
}

// Strict: "(x, y), (x, y)" with free whitespace.
Field<std::vector<Point2d>> strict_points(std::string_view content) {
  Field<std::vector<Point2d>> f;
  if (is_none(content)) return f;
  const std::string_view s = trim(content);
  std::vector<Point2d> pts;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < s.size() && is_space(s[i])) ++i;
  };
  auto read_int = [&](int& v) -> bool {
    skip_ws();
    std::size_t j = i;
    if (j < s.size() && s[j] == '-') ++j;
    const std::size_t digits = j;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j == digits || !parse_int(s.substr(i, j - i), v)) return false;
    i = j;
    return true;
  };
  auto expect = [&](char c) -> bool {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  };
  if (s.empty()) {
    f.error = "empty point_2d";
    return f;
  }
  for (;;) {
    Point2d p;
    if (!expect('(') || !read_int(p.x) || !expect(',') || !read_int(p.y) || !expect(')')) {
      f.error = "point_2d '" + std::string(s) + "' is not a list of (x, y) pairs";
      return f;
    }
    pts.push_back(p);
    skip_ws();
    if (i == s.size()) break;
    if (!expect(',')) {
      f.error = "point_2d '" + std::string(s) + "' is not a list of (x, y) pairs";
      return f;
    }
  }
  f.value = std::move(pts);
  return f;
}

Field<std::vector<Point2d>> lenient_points(std::string_view content) {
  Field<std::vector<Point2d>> f = strict_points(content);
  if (f.error.empty()) return f;
  f.error.clear();
  const std::string_view s = trim(content);
  std::vector<long long> nums;
  std::size_t i = 0;
  while (i < s.size()) {
    const bool neg = s[i] == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (!neg && !std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t j = neg ? i + 1 : i;
    while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + j, v);
    if (ec == std::errc() && std::isfinite(v) && std::fabs(v) < 1e9) nums.push_back(std::llround(v));
    i = std::max(j, static_cast<std::size_t>(ptr - s.data()));
    if (i == 0) ++i;
  }
  std::vector<Point2d> pts;
  for (std::size_t k = 0; k + 1 < nums.size(); k += 2)
    pts.push_back(Point2d{static_cast<int>(nums[k]), static_cast<int>(nums[k + 1])});
  if (pts.empty()) {
    f.repair = "point_2d '" + std::string(s) + "' has no coordinates; treated as None";
    return f;
  }
  f.repair = nums.size() % 2 ? "point_2d read leniently; trailing unpaired coordinate dropped"
                             : "point_2d read leniently as coordinate pairs";
  f.value = std::move(pts);
  return f;
}

std::optional<Verdict> strict_answer(std::string_view content) {
  const std::string_view body = trim(content);
  if (body == to_string(Verdict::AIGenerated)) return Verdict::AIGenerated;
  if (body == to_string(Verdict::Real)) return Verdict::Real;
  return std::nullopt;
}

// Substring cues; nullopt when absent or contradictory.
std::optional<Verdict> coerce_answer(std::string_view content) {
  std::string l;
  for (char c : content) {
    const unsigned char u = static_cast<unsigned char>(c);
    l.push_back(std::isalnum(u) ? static_cast<char>(std::tolower(u)) : ' ');
  }
  std::string squeezed;
  for (char c : l) {
    if (c == ' ' && (squeezed.empty() || squeezed.back() == ' ')) continue;
    squeezed.push_back(c);
  }
  const std::string padded = " " + squeezed + " ";
  auto has = [&](const char* w) { return padded.find(w) != std::string::npos; };
  const bool negated_ai = has(" not ai ") || has(" not an ai ") || has(" not generated ") || has(" isn t ai ") ||
                          has(" not ai generated ");
  const bool ai = !negated_ai && (has(" ai ") || has("generated") || has("synthetic") || has(" fake"));
  const bool real = negated_ai || has(" real ") || has(" authentic ") || has(" genuine ");
  if (ai == real) return std::nullopt;
  return ai ? Verdict::AIGenerated : Verdict::Real;
}

// ---------------------------------------------------------------------------------------
// Strict parser.

class StrictParser {
 public:
  StrictParser(std::string_view text, const std::vector<Token>& toks) : text_(text), toks_(toks) {}

  ParseOutcome run() {
    ParseOutcome out;
    ReasoningTrace trace;
    if (!parse_all(trace)) {
      out.diagnostics.push_back(Diagnostic{err_offset_, Severity::Error, err_});
      return out;
    }
    out.trace = std::move(trace);
    return out;
  }

 private:
  bool fail(std::size_t offset, std::string msg) {
    if (err_.empty()) {
      err_offset_ = offset;
      err_ = std::move(msg);
    }
    return false;
  }

  std::size_t here() const { return i_ < toks_.size() ? toks_[i_].begin : text_.size(); }

  void skip_ws() {
    while (i_ < toks_.size() && toks_[i_].kind == TokKind::Text && is_blank(content(toks_[i_]))) ++i_;
  }

  std::string_view content(const Token& t) const { return text_.substr(t.begin, t.end - t.begin); }

  bool expect(TokKind kind, Tag tag) {
    skip_ws();
    const char* what = kind == TokKind::Open ? "<" : "</";
    const std::string want = std::string(what) + std::string(tag_name(tag)) + ">";
    if (i_ >= toks_.size()) return fail(text_.size(), "expected " + want + " before end of input");
    const Token& t = toks_[i_];
    if (t.kind == TokKind::Text) return fail(t.begin, "unexpected text; expected " + want);
    if (t.kind != kind || t.tag != tag) return fail(t.begin, "expected " + want + ", found '" + std::string(content(t)) + "'");
    if (!t.canonical) return fail(t.begin, "non-canonical tag spelling '" + std::string(content(t)) + "'");
    ++i_;
    return true;
  }

  // Content of a leaf or top-level tag: at most one text token.
  std::string_view take_text() {
    if (i_ < toks_.size() && toks_[i_].kind == TokKind::Text) return content(toks_[i_++]);
    return {};
  }

  bool parse_all(ReasoningTrace& trace) {
    if (!expect(TokKind::Open, Tag::Think)) return false;
    trace.think = std::string(trim(take_text()));
    if (!expect(TokKind::Close, Tag::Think)) return false;

    if (!expect(TokKind::Open, Tag::Evidence)) return false;
    for (;;) {
      skip_ws();
      if (i_ < toks_.size() && toks_[i_].kind == TokKind::Close && toks_[i_].tag == Tag::Evidence) break;
      EvidenceBlock block;
      if (!parse_block(block)) return false;
      trace.evidence.push_back(std::move(block));
    }
    if (!expect(TokKind::Close, Tag::Evidence)) return false;

    if (!expect(TokKind::Open, Tag::Answer)) return false;
    const std::size_t answer_at = here();
    const std::string_view answer = take_text();
    auto v = strict_answer(answer);
    if (!v)
      return fail(answer_at, "answer must be exactly 'AI generated video' or 'Real video', found '" +
                                 std::string(trim(answer)) + "'");
    trace.answer = *v;
    if (!expect(TokKind::Close, Tag::Answer)) return false;
    skip_ws();
    if (i_ < toks_.size()) return fail(toks_[i_].begin, "unexpected content after </answer>");
    return true;
  }

  template <typename T, typename Fn>
  bool leaf(Tag tag, std::optional<T>& slot, Fn&& fn) {
    if (!expect(TokKind::Open, tag)) return false;
    const std::size_t at = here();
    auto field = fn(take_text());
    if (!field.error.empty()) return fail(at, field.error);
    slot = std::move(field.value);
    return expect(TokKind::Close, tag);
  }

  bool parse_block(EvidenceBlock& b) {
    if (!leaf(Tag::DefectCate, b.categories, strict_categories)) return false;
    if (!leaf(Tag::Timestamp, b.timestamp, strict_timestamp)) return false;
    if (!expect(TokKind::Open, Tag::Explanation)) return false;
    b.explanation = std::string(trim(take_text()));
    if (!expect(TokKind::Close, Tag::Explanation)) return false;
    if (!leaf(Tag::LocatedFrame, b.located_frame, strict_frame)) return false;
    return leaf(Tag::Point2d, b.points, strict_points);
  }

  std::string_view text_;
  const std::vector<Token>& toks_;
  std::size_t i_ = 0;
  std::size_t err_offset_ = 0;
  std::string err_;
};

// ---------------------------------------------------------------------------------------
// Lenient recovering parser.

class LenientParser {
 public:
  LenientParser(std::string_view text, const std::vector<Token>& toks) : text_(text), toks_(toks) {}

  ParseOutcome run() {
    for (const auto& t : toks_)
      if (t.kind != TokKind::Text && !t.canonical)
        warn(t.begin, "non-canonical tag spelling '" + std::string(text_.substr(t.begin, t.end - t.begin)) + "'");

    ReasoningTrace trace;
    std::size_t cursor = 0;  // token index

    // <think>
    const auto think_open = find(TokKind::Open, Tag::Think, 0, toks_.size());
    if (!think_open) {
      warn(0, "missing think tag");
    } else {
      const auto [end_tok, closed] = section_end(*think_open, Tag::Think, {Tag::Evidence, Tag::Answer});
      trace.think = std::string(trim(span_between(*think_open, end_tok)));
      if (!closed) warn(toks_[*think_open].begin, "unclosed think tag");
      report_stray(0, *think_open);
      cursor = closed ? end_tok + 1 : end_tok;
    }

    // <evidence>
    const auto ev_open = find(TokKind::Open, Tag::Evidence, cursor, toks_.size());
    std::size_t region_begin = cursor;
    std::size_t region_end = 0;
    if (!ev_open) {
      warn(offset(cursor), "missing evidence tag");
      const auto ans = find(TokKind::Open, Tag::Answer, cursor, toks_.size());
      region_end = ans ? *ans : toks_.size();
      parse_blocks(region_begin, region_end, trace.evidence);
      cursor = region_end;
    } else {
      report_stray(cursor, *ev_open);
      const auto [end_tok, closed] = section_end(*ev_open, Tag::Evidence, {Tag::Answer});
      if (!closed) warn(toks_[*ev_open].begin, "unclosed evidence tag");
      region_begin = *ev_open + 1;
      region_end = end_tok;
      parse_blocks(region_begin, region_end, trace.evidence);
      cursor = closed ? end_tok + 1 : end_tok;
    }

    // <answer>
    const auto ans_open = find(TokKind::Open, Tag::Answer, cursor, toks_.size());
    std::optional<Verdict> verdict;
    if (ans_open) {
      report_stray(cursor, *ans_open);
      const auto [end_tok, closed] = section_end(*ans_open, Tag::Answer, {});
      const std::string_view body = span_between(*ans_open, end_tok);
      const std::size_t at = toks_[*ans_open].end;
      if (!closed) warn(toks_[*ans_open].begin, "unclosed answer tag");
      verdict = strict_answer(body);
      if (!verdict) {
        verdict = coerce_answer(body);
        if (verdict)
          warn(at, "answer '" + std::string(trim(body)) + "' coerced to '" + std::string(to_string(*verdict)) + "'");
      }
      if (closed) report_stray(end_tok + 1, toks_.size());
    } else {
      const std::size_t from = offset(cursor);
      verdict = coerce_answer(text_.substr(from));
      if (verdict)
        warn(from, "missing answer tag; verdict '" + std::string(to_string(*verdict)) + "' inferred from trailing text");
    }
    if (!verdict) {
      ParseOutcome out;
      out.diagnostics = std::move(diags_);
      out.diagnostics.push_back(Diagnostic{ans_open ? toks_[*ans_open].end : offset(cursor), Severity::Error,
                                           ans_open ? "answer text is not a recognizable verdict"
                                                    : "no answer tag and no recognizable verdict text"});
      return out;
    }
    trace.answer = *verdict;
    ParseOutcome out;
    out.trace = std::move(trace);
    out.diagnostics = std::move(diags_);
    return out;
  }

 private:
  void warn(std::size_t offset, std::string msg) { diags_.push_back(Diagnostic{offset, Severity::Warning, std::move(msg)}); }

  std::size_t offset(std::size_t tok) const { return tok < toks_.size() ? toks_[tok].begin : text_.size(); }

  std::optional<std::size_t> find(TokKind kind, Tag tag, std::size_t from, std::size_t to) const {
    for (std::size_t i = from; i < to && i < toks_.size(); ++i)
      if (toks_[i].kind == kind && toks_[i].tag == tag) return i;
    return std::nullopt;
  }

  // Token index where the section opened at `open` ends: its close tag (closed = true) or the
  // first opening of a following section / end of input.
  std::pair<std::size_t, bool> section_end(std::size_t open, Tag tag, std::initializer_list<Tag> followers) const {
    for (std::size_t i = open + 1; i < toks_.size(); ++i) {
      const Token& t = toks_[i];
      if (t.kind == TokKind::Close && t.tag == tag) return {i, true};
      if (t.kind == TokKind::Open && std::find(followers.begin(), followers.end(), t.tag) != followers.end())
        return {i, false};
    }
    return {toks_.size(), false};
  }

  std::string_view span_between(std::size_t open_tok, std::size_t end_tok) const {
    const std::size_t b = toks_[open_tok].end;
    const std::size_t e = std::max(b, offset(end_tok));
    return text_.substr(b, e - b);
  }

  void report_stray(std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to && i < toks_.size(); ++i)
      if (toks_[i].kind == TokKind::Text && !is_blank(text_.substr(toks_[i].begin, toks_[i].end - toks_[i].begin))) {
        warn(toks_[i].begin, "stray text outside tags ignored");
        return;
      }
  }

  struct Pending {
    EvidenceBlock block;
    std::array<bool, 5> seen{};
    int last_order = -1;
    bool reordered = false;
    std::size_t begin = 0;
  };

  static int order_of(Tag t) { return static_cast<int>(t) - static_cast<int>(Tag::DefectCate); }

  void finish(Pending& p, std::vector<EvidenceBlock>& out) {
    if (std::none_of(p.seen.begin(), p.seen.end(), [](bool b) { return b; })) return;
    if (p.reordered) warn(p.begin, "evidence block tags out of order");
    for (Tag t : kBlockOrder)
      if (!p.seen[order_of(t)]) warn(p.begin, "evidence block missing <" + std::string(tag_name(t)) + ">; treated as None");
    out.push_back(std::move(p.block));
    p = Pending{};
  }

  template <typename T>
  void apply(const Field<T>& f, std::optional<T>& slot, std::size_t at) {
    if (!f.repair.empty()) warn(at, f.repair);
    slot = f.value;
  }

  void parse_blocks(std::size_t from, std::size_t to, std::vector<EvidenceBlock>& out) {
    Pending cur;
    for (std::size_t i = from; i < to && i < toks_.size(); ++i) {
      const Token& t = toks_[i];
      if (t.kind == TokKind::Text) {
        if (!is_blank(text_.substr(t.begin, t.end - t.begin))) warn(t.begin, "stray text inside evidence ignored");
        continue;
      }
      if (!is_leaf(t.tag)) {
        warn(t.begin, "misplaced <" + std::string(tag_name(t.tag)) + "> tag inside evidence ignored");
        continue;
      }
      if (t.kind == TokKind::Close) {
        warn(t.begin, "unmatched </" + std::string(tag_name(t.tag)) + "> ignored");
        continue;
      }
      // Leaf content runs to its close tag, else to the next leaf opening / region end.
      std::size_t end = i + 1;
      bool closed = false;
      for (; end < to && end < toks_.size(); ++end) {
        const Token& u = toks_[end];
        if (u.kind == TokKind::Close && u.tag == t.tag) {
          closed = true;
          break;
        }
        if (u.kind == TokKind::Open && is_leaf(u.tag)) break;
      }
      if (!closed) warn(t.begin, "unclosed <" + std::string(tag_name(t.tag)) + "> tag");
      const std::size_t cb = t.end;
      const std::size_t ce = std::max(cb, offset(std::min(end, to)));
      const std::string_view body = text_.substr(cb, ce - cb);

      const int ord = order_of(t.tag);
      if (cur.seen[ord]) finish(cur, out);
      if (std::none_of(cur.seen.begin(), cur.seen.end(), [](bool b) { return b; })) cur.begin = t.begin;
      if (ord < cur.last_order) cur.reordered = true;
      cur.last_order = std::max(cur.last_order, ord);
      cur.seen[ord] = true;

      switch (t.tag) {
        case Tag::DefectCate: apply(lenient_categories(body), cur.block.categories, cb); break;
        case Tag::Timestamp: apply(lenient_timestamp(body), cur.block.timestamp, cb); break;
        case Tag::Explanation: cur.block.explanation = std::string(trim(body)); break;
        case Tag::LocatedFrame: apply(lenient_frame(body), cur.block.located_frame, cb); break;
        case Tag::Point2d: apply(lenient_points(body), cur.block.points, cb); break;
        default: break;
      }
      i = closed ? end : end - 1;
    }
    finish(cur, out);
  }

  std::string_view text_;
  const std::vector<Token>& toks_;
  std::vector<Diagnostic> diags_;
};

}  // namespace

ParseOutcome parse_trace(std::string_view text, ParseMode mode) {
  const auto toks = lex(text);
  ParseOutcome strict = StrictParser(text, toks).run();
  if (mode == ParseMode::Strict || strict.trace) return strict;
  return LenientParser(text, toks).run();
}

std::string format_points(const std::vector<Point2d>& points) {
  std::string out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) out += ", ";
    out += "(" + std::to_string(points[i].x) + ", " + std::to_string(points[i].y) + ")";
  }
  return out;
}

std::string format_categories(CategorySet categories) {
  std::string out;
  for (auto c : categories.items()) {
    if (!out.empty()) out += ", ";
    out += to_string(c);
  }
  return out;
}

namespace {

std::string check_text(std::string_view field, std::string_view value) {
  if (value.empty()) return std::string(field) + " is empty";
  if (trim(value).size() != value.size()) return std::string(field) + " has surrounding whitespace";
  for (const auto& t : lex(value))
    if (t.kind != TokKind::Text) return std::string(field) + " contains a tag";
  return {};
}

}  // namespace

std::string check_serializable(const ReasoningTrace& trace) {
  if (auto e = check_text("think", trace.think); !e.empty()) return e;
  for (std::size_t i = 0; i < trace.evidence.size(); ++i) {
    const auto& b = trace.evidence[i];
    const std::string at = "block " + std::to_string(i) + ": ";
    if (auto e = check_text("explanation", b.explanation); !e.empty()) return at + e;
    if (is_none(b.explanation)) return at + "explanation reads as a None placeholder";
    if (trace.answer == Verdict::Real && !b.is_placeholder()) return at + "real verdict requires placeholder evidence";
    if (trace.answer == Verdict::AIGenerated && !b.is_substantive())
      return at + "AI verdict requires every evidence field";
    if (b.categories && b.categories->empty()) return at + "empty category set";
    if (b.timestamp && !b.timestamp->span) return at + "timestamp without a parsed span";
    if (b.timestamp && b.timestamp->span &&
        (!std::isfinite(b.timestamp->span->start_s) || !std::isfinite(b.timestamp->span->end_s) ||
         b.timestamp->span->start_s < 0 || b.timestamp->span->end_s < 0))
      return at + "timestamp out of range";
    if (b.located_frame && *b.located_frame < 0) return at + "negative located_frame";
    if (b.points && b.points->empty()) return at + "empty point list";
  }
  if (trace.answer == Verdict::AIGenerated && trace.evidence.empty()) return "AI verdict requires evidence";
  return {};
}

std::string serialize_trace(const ReasoningTrace& trace) {
  if (auto reason = check_serializable(trace); !reason.empty()) throw Error(ErrorKind::Unserializable, reason);
  std::string out;
  out += "<think>" + trace.think + "</think>\n";
  out += "<evidence>\n";
  for (const auto& b : trace.evidence) {
    out += "<defect_cate>" + (b.categories ? format_categories(*b.categories) : std::string("None")) + "</defect_cate>\n";
    out += "<timestamp>" + (b.timestamp ? format_timestamp(*b.timestamp->span) : std::string("None")) + "</timestamp>\n";
    out += "<explanation>" + b.explanation + "</explanation>\n";
    out += "<located_frame>" + (b.located_frame ? std::to_string(*b.located_frame) : std::string("None")) +
           "</located_frame>\n";
    out += "<point_2d>" + (b.points ? format_points(*b.points) : std::string("None")) + "</point_2d>\n";
  }
  out += "</evidence>\n";
  out += "<answer>" + std::string(to_string(trace.answer)) + "</answer>\n";
  return out;
}

std::vector<Lint> lint_trace(const ReasoningTrace& trace, const std::optional<VideoMeta>& meta) {
  std::vector<Lint> out;
  const bool any_substantive =
      std::any_of(trace.evidence.begin(), trace.evidence.end(), [](const EvidenceBlock& b) { return !b.is_placeholder(); });
  if (trace.answer == Verdict::AIGenerated && !any_substantive)
    out.push_back({"answer-evidence-conflict", std::nullopt, "AI verdict without any substantive evidence block"});
  if (trace.answer == Verdict::Real && any_substantive)
    out.push_back({"answer-evidence-conflict", std::nullopt, "real verdict with defect evidence"});

  for (std::size_t i = 0; i < trace.evidence.size(); ++i) {
    const auto& b = trace.evidence[i];
    if (b.points)
      for (const auto& p : *b.points)
        if (p.x < 0 || p.x > 1000 || p.y < 0 || p.y > 1000) {
          out.push_back({"point-out-of-range", i,
                         "point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside 0..1000"});
          break;
        }
    if (b.timestamp && b.timestamp->span && !(b.timestamp->span->start_s < b.timestamp->span->end_s))
      out.push_back({"timestamp-misordered", i, "timestamp start is not before end"});
    if (b.timestamp && !b.timestamp->span)
      out.push_back({"timestamp-unparseable", i, "timestamp '" + b.timestamp->raw + "' is not a time span"});
    if (meta && meta->fps > 0 && b.located_frame && b.timestamp && b.timestamp->span) {
      // Two-decimal timestamps can round either end by up to 5 ms.
      constexpr double kRounding = 0.005 + 1e-9;
      const double t = *b.located_frame / meta->fps;
      if (t < b.timestamp->span->start_s - kRounding || t > b.timestamp->span->end_s + kRounding) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "located_frame %d is at %.3fs, outside %s", *b.located_frame, t,
                      format_timestamp(*b.timestamp->span).c_str());
        out.push_back({"frame-outside-span", i, buf});
      }
    }
  }
  if (trim(trace.think).size() <= 20) out.push_back({"think-too-short", std::nullopt, "think must exceed 20 characters"});
  return out;
}

}  // namespace xvd
