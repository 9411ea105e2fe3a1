#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/core.hpp"

namespace gazeseg {

// Inclusive pixel bounds.
struct Box {
  int r0 = 0;
  int c0 = 0;
  int r1 = 0;
  int c1 = 0;

  bool ordered() const { return r0 <= r1 && c0 <= c1; }
  bool degenerate() const { return r0 == r1 && c0 == c1; }
  bool contains(int row, int col) const { return row >= r0 && row <= r1 && col >= c0 && col <= c1; }
  friend bool operator==(const Box&, const Box&) = default;
};

struct SegmentationRequest {
  std::string request_id;
  std::string case_id;
  int slice_index = 0;
  std::shared_ptr<const ImageSlice> image;  // inline image; required by the reference backend
  PointPrompt prompt;
  std::optional<Box> box;
  std::optional<Mask> prior_mask;

  // EmptyPrompt when there is neither a live point nor a box; InvalidParam
  // for an unordered box.
  void validate() const;
};

struct SegmentationResponse {
  std::string request_id;
  Mask mask;
  std::optional<std::vector<double>> prob;
  double latency_ms = 0.0;
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual SegmentationResponse segment(const SegmentationRequest& req) = 0;
  virtual std::string identity() const = 0;
};

inline constexpr double kDefaultTau = 0.1;

struct ReferenceResult {
  Mask mask;
  std::vector<double> prob;
};

// Deterministic seeded region growing. Seeds are the rounded foreground
// points (the box centre when a box has no foreground point inside it), plus
// prior-mask pixels within tau of the seed mean. Growth is 4-connected,
// FIFO, admits |I - mu| <= tau, and is clipped to the box. Grown pixels
// nearer to a background point than to any foreground point, and within tau
// of that point's 3x3 mean, are removed. prob is 1 - |I - mu| / (2 tau)
// inside the mask and 0 elsewhere.
ReferenceResult reference_segment(const ImageSlice& image, const PointPrompt& prompt,
                                  const std::optional<Box>& box, const Mask* prior,
                                  double tau = kDefaultTau);

class ReferenceBackend : public SegmentationBackend {
 public:
  explicit ReferenceBackend(double tau = kDefaultTau);
  SegmentationResponse segment(const SegmentationRequest& req) override;
  std::string identity() const override;
  double tau() const { return tau_; }

 private:
  double tau_;
};

// Tight bounds of the set pixels grown by `margin` and clamped to the image.
// Throws EmptyMask.
Box bbox_from_mask(const Mask& mask, int margin = 0);

// Wire encoding for POST /v1/segment.
nlohmann::json request_to_json(const SegmentationRequest& req, bool include_image = true);
// Throws ProtocolError on schema violations.
SegmentationRequest request_from_json(const nlohmann::json& j);
nlohmann::json response_to_json(const SegmentationResponse& resp);
SegmentationResponse response_from_json(const nlohmann::json& j);

nlohmann::json error_body(std::string_view code, std::string_view detail);

// Resolves (case_id, slice_index) to an image when a request arrives without
// one inline.
using ImageLookup =
    std::function<std::shared_ptr<const ImageSlice>(const std::string& case_id, int slice_index)>;

// Handles one /v1/segment body: returns (HTTP status, JSON body). 400 with
// {"error","detail"} on bad requests or prompts.
std::pair<int, std::string> serve_segment(SegmentationBackend& backend, const std::string& body,
                                          const ImageLookup& lookup = {});

struct RemoteOptions {
  std::chrono::milliseconds timeout{10000};
  bool send_image = true;
};

// Blocking HTTP client for /v1/segment. Connection failures and timeouts
// raise BackendUnavailable; malformed replies or a request_id mismatch
// raise ProtocolError.
class RemoteBackend : public SegmentationBackend {
 public:
  explicit RemoteBackend(std::string base_url, RemoteOptions options = {});
  SegmentationResponse segment(const SegmentationRequest& req) override;
  std::string identity() const override;

 private:
  std::string base_url_;
  RemoteOptions options_;
};

// "reference", "reference:<tau>", or an http(s):// URL.
std::unique_ptr<SegmentationBackend> make_backend(const std::string& spec);
std::unique_ptr<SegmentationBackend> make_backend(const nlohmann::json& config);
inline std::unique_ptr<SegmentationBackend> make_backend(const char* spec) {
  return make_backend(std::string(spec));
}

}  // namespace gazeseg
