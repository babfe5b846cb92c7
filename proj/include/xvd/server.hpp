#pragma once

#include <memory>
#include <string>

#include "xvd/segmentation.hpp"
#include "xvd/store.hpp"

namespace xvd::service {

// HTTP surface over a Store:
//   GET  /videos                      listing
//   GET  /videos/{id}                 listing entry
//   GET  /videos/{id}/frames/{n}      still image
//   GET  /videos/{id}/annotation      envelope
//   PUT  /videos/{id}/annotation      body = annotation record, header X-Expected-Revision
//                                     200 envelope | 409 conflict | 422 violations
//   POST /videos/{id}/segment         body {frame, points: [[frame, x, y, label]...]}
//   POST /export                      line-delimited archive | 422 offenders
// Error bodies are {"error": kind, "message": text} plus "violations", "offenders" or "revision".
class AnnotationServer {
 public:
  AnnotationServer(Store& store, SegmentationClient& segmenter);
  ~AnnotationServer();

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Returns the bound port, or -1 on failure. Port 0 picks a free port.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace xvd::service
