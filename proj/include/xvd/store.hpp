#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xvd/evidence.hpp"

namespace xvd::service {

struct VideoInfo {
  std::string id;
  std::string source;
  double fps = 0.0;
  int width = 0;
  int height = 0;
  int frame_count = 0;

  friend bool operator==(const VideoInfo&, const VideoInfo&) = default;
};

nlohmann::json video_info_to_json(const VideoInfo& v);
VideoInfo video_info_from_json(const nlohmann::json& j);

struct AnnotationEnvelope {
  VideoAnnotation annotation;
  std::uint64_t revision = 0;
  std::string updated_at;
};

nlohmann::json envelope_to_json(const AnnotationEnvelope& e);
AnnotationEnvelope envelope_from_json(const nlohmann::json& j);

struct VideoListing {
  VideoInfo info;
  std::string status;  // "unannotated", "annotated" or "invalid"
  std::optional<Verdict> verdict;
  std::optional<std::uint64_t> revision;
  std::string detail;  // reason when status is "invalid"
};

nlohmann::json listing_to_json(const VideoListing& l);

struct RevisionConflict : Error {
  std::uint64_t current;
  RevisionConflict(std::uint64_t current_, std::uint64_t expected)
      : Error(ErrorKind::Conflict, "expected revision " + std::to_string(expected) + " but stored revision is " +
                                       std::to_string(current_)),
        current(current_) {}
};

struct ValidationRejected : Error {
  std::vector<Violation> violations;
  explicit ValidationRejected(std::vector<Violation> v);
};

struct ExportRefused : Error {
  std::vector<std::string> offenders;
  explicit ExportRefused(std::vector<std::string> ids);
};

// UTC timestamp "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now();

// Called after the temp file is written and flushed, before it is renamed over the target.
// Throwing from the hook leaves the temp file behind and the target untouched.
using WriteHook = std::function<void(const std::filesystem::path& temp, const std::filesystem::path& target)>;

// Layout: <root>/manifest.json, <root>/annotations/<id>.json, optional <root>/frames/<id>/<n>.{png,jpg}.
class Store {
 public:
  using Clock = std::function<std::string()>;

  // Creates the directory layout and an empty manifest when missing. Throws Io when unreadable.
  explicit Store(std::filesystem::path root, Clock clock = utc_now);

  const std::filesystem::path& root() const { return root_; }

  std::vector<VideoInfo> videos() const;
  std::optional<VideoInfo> video(const std::string& id) const;

  // Adds or replaces a manifest entry.
  void add_video(const VideoInfo& info);

  // Sorted by id; unreadable or invalid annotation files are listed with status "invalid".
  std::vector<VideoListing> list_videos() const;

  // Throws NotFound for unknown ids or videos without an annotation, Malformed for corrupt files.
  AnnotationEnvelope get_annotation(const std::string& id) const;

  // expected_revision 0 creates the annotation. Throws NotFound, RevisionConflict or ValidationRejected.
  AnnotationEnvelope put_annotation(const std::string& id, const VideoAnnotation& annotation,
                                    std::uint64_t expected_revision);

  std::optional<std::filesystem::path> frame_path(const std::string& id, int frame) const;

  // Line-delimited archive: a manifest line, then one envelope line per annotated video sorted by id.
  // Throws ExportRefused naming every video whose annotation is unreadable or invalid.
  std::string export_corpus() const;

  // Populates an empty store from an archive produced by export_corpus.
  static void import_corpus(const std::filesystem::path& root, const std::string& archive);

  void set_write_hook(WriteHook hook) { write_hook_ = std::move(hook); }

 private:
  std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }
  std::filesystem::path annotation_path(const std::string& id) const;
  void write_manifest(const std::vector<VideoInfo>& videos);
  void atomic_write(const std::filesystem::path& target, const std::string& content);
  std::mutex& video_mutex(const std::string& id);

  std::filesystem::path root_;
  Clock clock_;
  WriteHook write_hook_;
  std::mutex manifest_mutex_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// Rejects ids that could escape the store directory.
bool is_safe_id(const std::string& id);

}  // namespace xvd::service
