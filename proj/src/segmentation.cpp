#include "xvd/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>

#include "xvd/annotation_io.hpp"

namespace xvd::service {

using nlohmann::json;

std::vector<std::uint32_t> encode_rle(const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t len = 0;
  for (std::uint8_t v : mask) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      runs.push_back(len);
      current = bit;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

std::vector<std::uint8_t> decode_rle(const std::vector<std::uint32_t>& runs, std::size_t size) {
  std::vector<std::uint8_t> mask;
  mask.reserve(size);
  std::uint8_t value = 0;
  for (std::uint32_t r : runs) {
    if (mask.size() + r > size) throw Error(ErrorKind::Malformed, "run lengths exceed the frame size");
    mask.insert(mask.end(), r, value);
    value ^= 1;
  }
  if (mask.size() != size) throw Error(ErrorKind::Malformed, "run lengths do not cover the frame");
  return mask;
}

json mask_to_json(const MaskResult& m) {
  return {{"frame", m.frame}, {"width", m.width}, {"height", m.height}, {"runs", m.runs}, {"provenance", m.provenance}};
}

MaskResult mask_from_json(const json& j) {
  try {
    MaskResult m{j.at("frame").get<int>(), j.at("width").get<int>(), j.at("height").get<int>(),
                 j.at("runs").get<std::vector<std::uint32_t>>(), j.value("provenance", std::string())};
    if (m.width <= 0 || m.height <= 0) throw Error(ErrorKind::Malformed, "mask dimensions must be positive");
    decode_rle(m.runs, static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height));
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("mask: ") + e.what());
  }
}

json segment_request_to_json(const SegmentRequest& r) {
  json pts = json::array();
  for (const auto& p : r.points) pts.push_back(point_to_json(p));
  return {{"video_id", r.video_id}, {"frame", r.frame}, {"width", r.width}, {"height", r.height}, {"points", pts}};
}

void check_segment_request(const SegmentRequest& r, int frame_count) {
  if (r.points.empty()) throw Error(ErrorKind::Rejected, "no points given");
  if (std::none_of(r.points.begin(), r.points.end(), [](const PointPrompt& p) { return p.label == PointLabel::Positive; }))
    throw Error(ErrorKind::Rejected, "at least one positive point is required");
  if (r.frame < 0 || r.frame >= frame_count) throw Error(ErrorKind::Rejected, "frame outside the video");
  for (const auto& p : r.points)
    if (p.x < 0 || p.y < 0 || p.x >= r.width || p.y >= r.height)
      throw Error(ErrorKind::Rejected, "point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside the frame");
}

MaskResult StubSegmentationClient::segment(const SegmentRequest& r) {
  if (r.width <= 0 || r.height <= 0) throw Error(ErrorKind::Rejected, "frame dimensions must be positive");
  const double diag = std::hypot(static_cast<double>(r.width), static_cast<double>(r.height));
  const double pos_r = 0.05 * diag;
  const double neg_r = 0.03 * diag;

  int x0 = r.width, y0 = r.height, x1 = -1, y1 = -1;
  for (const auto& p : r.points) {
    if (p.label != PointLabel::Positive) continue;
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  if (x1 < 0) throw Error(ErrorKind::Rejected, "at least one positive point is required");

  auto inside = [](int px, int py, double bx0, double by0, double bx1, double by1, double rad) {
    return px >= bx0 - rad && px <= bx1 + rad && py >= by0 - rad && py <= by1 + rad;
  };
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height), 0);
  for (int py = 0; py < r.height; ++py) {
    for (int px = 0; px < r.width; ++px) {
      if (!inside(px, py, x0, y0, x1, y1, pos_r)) continue;
      bool removed = false;
      for (const auto& p : r.points)
        if (p.label == PointLabel::Negative && inside(px, py, p.x, p.y, p.x, p.y, neg_r)) {
          removed = true;
          break;
        }
      if (!removed) mask[static_cast<std::size_t>(py) * static_cast<std::size_t>(r.width) + static_cast<std::size_t>(px)] = 1;
    }
  }
  return MaskResult{r.frame, r.width, r.height, encode_rle(mask), id()};
}

HttpSegmentationClient::HttpSegmentationClient(std::string url, std::chrono::milliseconds timeout)
    : url_(std::move(url)), timeout_(timeout) {}

MaskResult HttpSegmentationClient::segment(const SegmentRequest& request) {
  // url = scheme://host[:port]/path
  const auto scheme_end = url_.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::InvalidArgument, "segmentation URL needs a scheme");
  const auto path_start = url_.find('/', scheme_end + 3);
  const std::string base = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url_.substr(path_start);

  httplib::Client cli(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  auto res = cli.Post(path, segment_request_to_json(request).dump(), "application/json");
  if (!res) throw Error(ErrorKind::Retryable, "segmentation request failed: " + httplib::to_string(res.error()));
  if (res->status >= 500) throw Error(ErrorKind::Retryable, "segmentation service returned " + std::to_string(res->status));
  if (res->status != 200) throw Error(ErrorKind::Rejected, "segmentation service returned " + std::to_string(res->status));
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("segmentation reply: ") + e.what());
  }
  MaskResult m = mask_from_json(body);
  if (m.provenance.empty()) m.provenance = id();
  return m;
}

}  // namespace xvd::service
