#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xvd/evidence.hpp"

namespace xvd::service {

struct SegmentRequest {
  std::string video_id;
  int frame = 0;
  int width = 0;
  int height = 0;
  std::vector<PointPrompt> points;
};

// Row-major run lengths over the frame grid, alternating background/foreground and starting with
// background (a leading zero when the first pixel is foreground).
struct MaskResult {
  int frame = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> runs;
  std::string provenance;
};

std::vector<std::uint32_t> encode_rle(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> decode_rle(const std::vector<std::uint32_t>& runs, std::size_t size);

nlohmann::json mask_to_json(const MaskResult& m);
MaskResult mask_from_json(const nlohmann::json& j);
nlohmann::json segment_request_to_json(const SegmentRequest& r);

class SegmentationClient {
 public:
  virtual ~SegmentationClient() = default;
  // Throws Error{Retryable} on timeouts and transport failures.
  virtual MaskResult segment(const SegmentRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Bounding box of the positive points dilated by 5% of the frame diagonal, minus each negative
// point dilated by 3%. A pixel (px, py) is inside a box dilated by r when it lies within r of the box
// along both axes.
class StubSegmentationClient final : public SegmentationClient {
 public:
  MaskResult segment(const SegmentRequest& request) override;
  std::string id() const override { return "stub"; }
};

// POSTs the request as JSON to `url` and expects a mask JSON reply.
class HttpSegmentationClient final : public SegmentationClient {
 public:
  HttpSegmentationClient(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  MaskResult segment(const SegmentRequest& request) override;
  std::string id() const override { return url_; }

 private:
  std::string url_;
  std::chrono::milliseconds timeout_;
};

// Checks the request against the frame before forwarding: throws Rejected for an empty point list,
// no positive point, out-of-frame points or a frame index outside the video.
void check_segment_request(const SegmentRequest& request, int frame_count);

}  // namespace xvd::service
