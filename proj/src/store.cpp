#include "xvd/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "xvd/annotation_io.hpp"

namespace xvd::service {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json video_info_to_json(const VideoInfo& v) {
  return {{"id", v.id}, {"source", v.source}, {"fps", v.fps}, {"width", v.width}, {"height", v.height},
          {"frame_count", v.frame_count}};
}

VideoInfo video_info_from_json(const nlohmann::json& j) {
  try {
    return VideoInfo{j.at("id").get<std::string>(), j.at("source").get<std::string>(), j.at("fps").get<double>(),
                     j.at("width").get<int>(),      j.at("height").get<int>(),        j.at("frame_count").get<int>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("video entry: ") + e.what());
  }
}

nlohmann::json envelope_to_json(const AnnotationEnvelope& e) {
  return {{"revision", e.revision}, {"updated_at", e.updated_at}, {"annotation", annotation_to_json(e.annotation)}};
}

AnnotationEnvelope envelope_from_json(const nlohmann::json& j) {
  try {
    return AnnotationEnvelope{annotation_from_json(j.at("annotation")), j.at("revision").get<std::uint64_t>(),
                              j.at("updated_at").get<std::string>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("envelope: ") + e.what());
  }
}

nlohmann::json listing_to_json(const VideoListing& l) {
  json j = video_info_to_json(l.info);
  j["status"] = l.status;
  j["verdict"] = l.verdict ? json(std::string(to_string(*l.verdict))) : json(nullptr);
  j["revision"] = l.revision ? json(*l.revision) : json(nullptr);
  if (!l.detail.empty()) j["detail"] = l.detail;
  return j;
}

namespace {

std::string describe(const std::vector<Violation>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ", ") + x.field + ": " + x.rule;
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ", ") + x;
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump_file(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

ValidationRejected::ValidationRejected(std::vector<Violation> v)
    : Error(ErrorKind::Rejected, "annotation violates " + describe(v)), violations(std::move(v)) {}

ExportRefused::ExportRefused(std::vector<std::string> ids)
    : Error(ErrorKind::Rejected, "invalid annotations: " + join(ids)), offenders(std::move(ids)) {}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_safe_id(const std::string& id) {
  if (id.empty() || id.size() > 200 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

Store::Store(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  std::error_code ec;
  fs::create_directories(root_ / "annotations", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create store at " + root_.string() + ": " + ec.message());
  if (!fs::exists(manifest_path())) write_manifest({});
  videos();
}

fs::path Store::annotation_path(const std::string& id) const { return root_ / "annotations" / (id + ".json"); }

std::vector<VideoInfo> Store::videos() const {
  const std::string text = read_file(manifest_path());
  std::vector<VideoInfo> out;
  try {
    const json doc = json::parse(text);
    for (const auto& v : doc.at("videos")) out.push_back(video_info_from_json(v));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, "manifest unreadable: " + std::string(e.what()));
  } catch (const Error& e) {
    throw Error(ErrorKind::Io, std::string("manifest unreadable: ") + e.what());
  }
  std::sort(out.begin(), out.end(), [](const VideoInfo& a, const VideoInfo& b) { return a.id < b.id; });
  return out;
}

std::optional<VideoInfo> Store::video(const std::string& id) const {
  for (auto& v : videos())
    if (v.id == id) return v;
  return std::nullopt;
}

void Store::add_video(const VideoInfo& info) {
  if (!is_safe_id(info.id)) throw Error(ErrorKind::InvalidArgument, "unsafe video id '" + info.id + "'");
  std::lock_guard lock(manifest_mutex_);
  auto all = videos();
  std::erase_if(all, [&](const VideoInfo& v) { return v.id == info.id; });
  all.push_back(info);
  std::sort(all.begin(), all.end(), [](const VideoInfo& a, const VideoInfo& b) { return a.id < b.id; });
  write_manifest(all);
}

void Store::write_manifest(const std::vector<VideoInfo>& videos) {
  json arr = json::array();
  for (const auto& v : videos) arr.push_back(video_info_to_json(v));
  atomic_write(manifest_path(), dump_file({{"videos", arr}}));
}

void Store::atomic_write(const fs::path& target, const std::string& content) {
  const fs::path temp = target.string() + ".tmp";
  const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorKind::Io, "open " + temp.string() + ": " + std::strerror(errno));
  std::size_t off = 0;
  while (off < content.size()) {
    const ssize_t n = ::write(fd, content.data() + off, content.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error(ErrorKind::Io, "write " + temp.string() + ": " + std::strerror(err));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) throw Error(ErrorKind::Io, "flush " + temp.string() + ": " + std::strerror(errno));
  if (write_hook_) write_hook_(temp, target);
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) throw Error(ErrorKind::Io, "rename " + temp.string() + ": " + ec.message());
}

std::mutex& Store::video_mutex(const std::string& id) {
  std::lock_guard lock(locks_mutex_);
  auto& m = locks_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

std::vector<VideoListing> Store::list_videos() const {
  std::vector<VideoListing> out;
  for (const auto& v : videos()) {
    VideoListing l{v, "unannotated", std::nullopt, std::nullopt, ""};
    if (fs::exists(annotation_path(v.id))) {
      try {
        const auto env = get_annotation(v.id);
        l.revision = env.revision;
        l.verdict = env.annotation.verdict;
        const auto violations = validate_annotation(env.annotation);
        if (violations.empty()) {
          l.status = "annotated";
        } else {
          l.status = "invalid";
          l.detail = describe(violations);
        }
      } catch (const Error& e) {
        l.status = "invalid";
        l.detail = e.what();
      }
    }
    out.push_back(std::move(l));
  }
  return out;
}

AnnotationEnvelope Store::get_annotation(const std::string& id) const {
  if (!is_safe_id(id)) throw Error(ErrorKind::NotFound, "unknown video '" + id + "'");
  const fs::path p = annotation_path(id);
  if (!fs::exists(p)) throw Error(ErrorKind::NotFound, "no annotation for '" + id + "'");
  const std::string text = read_file(p);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, id + ": " + e.what());
  }
  return envelope_from_json(j);
}

AnnotationEnvelope Store::put_annotation(const std::string& id, const VideoAnnotation& annotation,
                                         std::uint64_t expected_revision) {
  const auto info = is_safe_id(id) ? video(id) : std::nullopt;
  if (!info) throw Error(ErrorKind::NotFound, "unknown video '" + id + "'");

  auto violations = validate_annotation(annotation);
  if (annotation.video_id != info->id) violations.push_back({"video_id", "video-id-mismatch"});
  if (annotation.source != info->source) violations.push_back({"source", "manifest-mismatch"});
  if (annotation.fps != info->fps) violations.push_back({"fps", "manifest-mismatch"});
  if (annotation.width != info->width || annotation.height != info->height)
    violations.push_back({"width", "manifest-mismatch"});
  if (annotation.frame_count != info->frame_count) violations.push_back({"frame_count", "manifest-mismatch"});
  if (!violations.empty()) throw ValidationRejected(std::move(violations));

  std::lock_guard lock(video_mutex(id));
  std::uint64_t current = 0;
  if (fs::exists(annotation_path(id))) current = get_annotation(id).revision;
  if (current != expected_revision) throw RevisionConflict(current, expected_revision);

  AnnotationEnvelope env{annotation, current + 1, clock_()};
  atomic_write(annotation_path(id), dump_file(envelope_to_json(env)));
  return env;
}

std::optional<fs::path> Store::frame_path(const std::string& id, int frame) const {
  if (!is_safe_id(id) || frame < 0) return std::nullopt;
  for (const char* ext : {".png", ".jpg"}) {
    const fs::path p = root_ / "frames" / id / (std::to_string(frame) + ext);
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

std::string Store::export_corpus() const {
  const auto vids = videos();
  json manifest = json::array();
  for (const auto& v : vids) manifest.push_back(video_info_to_json(v));
  std::string out = json{{"kind", "manifest"}, {"videos", manifest}}.dump() + "\n";
  std::vector<std::string> offenders;
  for (const auto& v : vids) {
    if (!fs::exists(annotation_path(v.id))) continue;
    try {
      const auto env = get_annotation(v.id);
      if (!validate_annotation(env.annotation).empty()) {
        offenders.push_back(v.id);
        continue;
      }
      json line = envelope_to_json(env);
      line["kind"] = "annotation";
      line["video_id"] = v.id;
      out += line.dump() + "\n";
    } catch (const Error&) {
      offenders.push_back(v.id);
    }
  }
  if (!offenders.empty()) throw ExportRefused(std::move(offenders));
  return out;
}

void Store::import_corpus(const fs::path& root, const std::string& archive) {
  if (fs::exists(root / "annotations") && !fs::is_empty(root / "annotations"))
    throw Error(ErrorKind::Conflict, "import target already holds annotations");
  std::istringstream in(archive);
  std::string line;
  std::vector<VideoInfo> vids;
  std::vector<AnnotationEnvelope> envs;
  bool seen_manifest = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "manifest") {
        if (seen_manifest) throw Error(ErrorKind::Malformed, "duplicate manifest line");
        seen_manifest = true;
        for (const auto& v : j.at("videos")) vids.push_back(video_info_from_json(v));
      } else if (kind == "annotation") {
        envs.push_back(envelope_from_json(j));
        if (j.at("video_id").get<std::string>() != envs.back().annotation.video_id)
          throw Error(ErrorKind::Malformed, "archive line names a different video than its annotation");
      } else {
        throw Error(ErrorKind::Malformed, "unknown archive line kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("archive: ") + e.what());
  }
  if (!seen_manifest) throw Error(ErrorKind::Malformed, "archive has no manifest line");

  Store store(root);
  for (const auto& v : vids)
    if (!is_safe_id(v.id)) throw Error(ErrorKind::Malformed, "unsafe video id '" + v.id + "'");
  std::sort(vids.begin(), vids.end(), [](const VideoInfo& a, const VideoInfo& b) { return a.id < b.id; });
  store.write_manifest(vids);
  for (const auto& env : envs) {
    const auto& id = env.annotation.video_id;
    if (!store.video(id)) throw Error(ErrorKind::Malformed, "annotation for '" + id + "' has no manifest entry");
    const auto violations = validate_annotation(env.annotation);
    if (!violations.empty()) throw ValidationRejected(violations);
    store.atomic_write(store.annotation_path(id), dump_file(envelope_to_json(env)));
  }
}

}  // namespace xvd::service
