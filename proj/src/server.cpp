#include "xvd/server.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "xvd/annotation_io.hpp"

namespace xvd::service {

using nlohmann::json;

struct AnnotationServer::Impl {
  Store& store;
  SegmentationClient& segmenter;
  httplib::Server http;

  Impl(Store& s, SegmentationClient& seg) : store(s), segmenter(seg) { routes(); }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
  }

  static void send_error(httplib::Response& res, int status, const Error& e, json extra = json::object()) {
    extra["error"] = error_kind_name(e.kind);
    extra["message"] = e.what();
    send_json(res, status, extra);
  }

  static int status_for(ErrorKind k) {
    switch (k) {
      case ErrorKind::NotFound: return 404;
      case ErrorKind::Conflict: return 409;
      case ErrorKind::Rejected: return 422;
      case ErrorKind::Retryable: return 503;
      case ErrorKind::Malformed:
      case ErrorKind::InvalidArgument:
      case ErrorKind::PointOutOfFrame:
      case ErrorKind::NoPositivePrompt: return 400;
      default: return 500;
    }
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const RevisionConflict& e) {
      send_error(res, 409, e, {{"revision", e.current}});
    } catch (const ValidationRejected& e) {
      json v = json::array();
      for (const auto& x : e.violations) v.push_back({{"field", x.field}, {"rule", x.rule}});
      send_error(res, 422, e, {{"violations", v}});
    } catch (const ExportRefused& e) {
      send_error(res, 422, e, {{"offenders", e.offenders}});
    } catch (const Error& e) {
      send_error(res, status_for(e.kind), e);
    } catch (const json::exception& e) {
      send_error(res, 400, Error(ErrorKind::Malformed, e.what()));
    } catch (const std::exception& e) {
      send_error(res, 500, Error(ErrorKind::Io, e.what()));
    }
  }

  VideoListing find_listing(const std::string& id) {
    for (auto& l : store.list_videos())
      if (l.info.id == id) return l;
    throw Error(ErrorKind::NotFound, "unknown video '" + id + "'");
  }

  void routes() {
    http.Get("/videos", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json arr = json::array();
        for (const auto& l : store.list_videos()) arr.push_back(listing_to_json(l));
        send_json(res, 200, arr);
      });
    });

    http.Get(R"(/videos/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, listing_to_json(find_listing(req.matches[1]))); });
    });

    http.Get(R"(/videos/([^/]+)/frames/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        const int n = std::stoi(req.matches[2]);
        const auto path = store.frame_path(id, n);
        if (!path) throw Error(ErrorKind::NotFound, "no frame " + std::to_string(n) + " for '" + id + "'");
        std::ifstream in(*path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        res.status = 200;
        res.set_content(ss.str(), path->extension() == ".png" ? "image/png" : "image/jpeg");
      });
    });

    http.Get(R"(/videos/([^/]+)/annotation)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, envelope_to_json(store.get_annotation(req.matches[1]))); });
    });

    http.Put(R"(/videos/([^/]+)/annotation)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_header("X-Expected-Revision"))
          throw Error(ErrorKind::Malformed, "missing X-Expected-Revision header");
        const std::string rev_text = req.get_header_value("X-Expected-Revision");
        std::size_t pos = 0;
        unsigned long long rev = 0;
        try {
          rev = std::stoull(rev_text, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos == 0 || pos != rev_text.size()) throw Error(ErrorKind::Malformed, "bad X-Expected-Revision '" + rev_text + "'");
        const VideoAnnotation a = parse_annotation(req.body);
        send_json(res, 200, envelope_to_json(store.put_annotation(req.matches[1], a, rev)));
      });
    });

    http.Post(R"(/videos/([^/]+)/segment)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        const auto info = store.video(id);
        if (!info) throw Error(ErrorKind::NotFound, "unknown video '" + id + "'");
        const json body = json::parse(req.body);
        SegmentRequest sr{id, body.at("frame").get<int>(), info->width, info->height, {}};
        for (const auto& p : body.at("points")) sr.points.push_back(point_from_json(p));
        check_segment_request(sr, info->frame_count);
        send_json(res, 200, mask_to_json(segmenter.segment(sr)));
      });
    });

    http.Post("/export", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(store.export_corpus(), "application/x-ndjson");
      });
    });
  }
};

AnnotationServer::AnnotationServer(Store& store, SegmentationClient& segmenter)
    : impl_(std::make_unique<Impl>(store, segmenter)) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::listen_after_bind() { return impl_->http.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->http.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace xvd::service
