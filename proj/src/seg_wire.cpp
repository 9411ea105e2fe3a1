#include <algorithm>

#include "gazeseg/codec.hpp"
#include "gazeseg/error.hpp"
#include "gazeseg/rle.hpp"
#include "gazeseg/seg_backend.hpp"

namespace gazeseg {

namespace {

using nlohmann::json;

PointPrompt prompt_from_wire(const json& points) {
  if (!points.is_array()) fail(ErrorCode::kProtocolError, "points must be an array");
  if (points.empty() || points.size() > static_cast<std::size_t>(kMaxPromptCapacity)) {
    fail(ErrorCode::kProtocolError, "point count must be in [1, 50]");
  }
  std::vector<PromptPoint> live;
  bool padding_seen = false;
  for (const auto& p : points) {
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
        !p[2].is_number_integer()) {
      fail(ErrorCode::kProtocolError, "each point must be [x, y, label]");
    }
    const int label = p[2].get<int>();
    if (label == kLabelPadding) {
      padding_seen = true;
      continue;
    }
    if (label != kLabelForeground && label != kLabelBackground) {
      fail(ErrorCode::kProtocolError, "point labels must be 1, 0 or -1");
    }
    if (padding_seen) fail(ErrorCode::kProtocolError, "padding entries must come last");
    live.push_back({p[0].get<double>(), p[1].get<double>(), label});
  }
  return PointPrompt::padded(static_cast<int>(points.size()), live);
}

}  // namespace

json request_to_json(const SegmentationRequest& req, bool include_image) {
  json j;
  j["request_id"] = req.request_id;
  j["case_id"] = req.case_id;
  j["slice_index"] = req.slice_index;
  if (include_image && req.image) {
    const auto gray = to_gray8(req.image->height(), req.image->width(), req.image->intensities());
    j["image_png_b64"] = base64_encode(png_encode_gray8(gray));
  }
  json points = json::array();
  for (const auto& p : req.prompt.points()) points.push_back({p.x, p.y, p.label});
  j["points"] = std::move(points);
  j["box"] = req.box ? json{req.box->r0, req.box->c0, req.box->r1, req.box->c1} : json(nullptr);
  j["prior_mask"] = req.prior_mask ? rle_to_json(*req.prior_mask) : json(nullptr);
  return j;
}

SegmentationRequest request_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kProtocolError, "request must be a JSON object");
  SegmentationRequest req;
  try {
    req.request_id = j.at("request_id").get<std::string>();
    req.case_id = j.at("case_id").get<std::string>();
    req.slice_index = j.at("slice_index").get<int>();
    if (j.contains("image_png_b64") && !j["image_png_b64"].is_null()) {
      const auto png = base64_decode(j["image_png_b64"].get<std::string>());
      req.image = std::make_shared<ImageSlice>(
          image_from_gray8(png_decode_gray8(png), req.slice_index, req.case_id));
    }
    req.prompt = prompt_from_wire(j.at("points"));
    const auto& box = j.value("box", json(nullptr));
    if (!box.is_null()) {
      if (!box.is_array() || box.size() != 4) fail(ErrorCode::kProtocolError, "box must be [r0,c0,r1,c1]");
      req.box = Box{box[0].get<int>(), box[1].get<int>(), box[2].get<int>(), box[3].get<int>()};
      if (!req.box->ordered()) fail(ErrorCode::kProtocolError, "box corners are not ordered");
    }
    const auto& prior = j.value("prior_mask", json(nullptr));
    if (!prior.is_null()) req.prior_mask = rle_from_json(prior);
  } catch (const json::exception& e) {
    fail(ErrorCode::kProtocolError, std::string("malformed segment request: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidParam) fail(ErrorCode::kProtocolError, e.detail());
    throw;
  }
  return req;
}

json response_to_json(const SegmentationResponse& resp) {
  json j;
  j["request_id"] = resp.request_id;
  j["mask"] = rle_to_json(resp.mask);
  if (resp.prob) {
    const auto gray = to_gray8(resp.mask.height(), resp.mask.width(), *resp.prob);
    j["prob_png_b64"] = base64_encode(png_encode_gray8(gray));
  } else {
    j["prob_png_b64"] = nullptr;
  }
  j["latency_ms"] = resp.latency_ms;
  return j;
}

SegmentationResponse response_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kProtocolError, "response must be a JSON object");
  SegmentationResponse resp;
  try {
    resp.request_id = j.at("request_id").get<std::string>();
    resp.mask = rle_from_json(j.at("mask"));
    const auto& prob = j.value("prob_png_b64", json(nullptr));
    if (!prob.is_null()) {
      const auto img = png_decode_gray8(base64_decode(prob.get<std::string>()));
      if (img.height != resp.mask.height() || img.width != resp.mask.width()) {
        fail(ErrorCode::kProtocolError, "probability map shape differs from mask");
      }
      std::vector<double> p(img.pixels.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.pixels[i] / 255.0;
      resp.prob = std::move(p);
    }
    resp.latency_ms = j.at("latency_ms").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kProtocolError, std::string("malformed segment response: ") + e.what());
  }
  return resp;
}

json error_body(std::string_view code, std::string_view detail) {
  return {{"error", code}, {"detail", detail}};
}

std::pair<int, std::string> serve_segment(SegmentationBackend& backend, const std::string& body,
                                          const ImageLookup& lookup) {
  try {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception& e) {
      fail(ErrorCode::kProtocolError, std::string("body is not JSON: ") + e.what());
    }
    auto req = request_from_json(j);
    if (!req.image && lookup) req.image = lookup(req.case_id, req.slice_index);
    if (!req.image) fail(ErrorCode::kProtocolError, "image_png_b64 required for an unknown case");
    if (req.prior_mask && !req.prior_mask->same_shape(Mask(req.image->height(), req.image->width()))) {
      fail(ErrorCode::kProtocolError, "prior mask shape differs from image");
    }
    const auto resp = backend.segment(req);
    return {200, response_to_json(resp).dump()};
  } catch (const Error& e) {
    return {400, error_body(to_string(e.code()), e.detail()).dump()};
  }
}

}  // namespace gazeseg
