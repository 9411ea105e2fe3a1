#include <httplib.h>

#include <stdexcept>

#include "gazeseg/error.hpp"
#include "gazeseg/seg_backend.hpp"

namespace gazeseg {

RemoteBackend::RemoteBackend(std::string base_url, RemoteOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

SegmentationResponse RemoteBackend::segment(const SegmentationRequest& req) {
  req.validate();
  httplib::Client client(base_url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string body = request_to_json(req, options_.send_image).dump();
  auto res = client.Post("/v1/segment", body, "application/json");
  if (!res) {
    fail(ErrorCode::kBackendUnavailable,
         base_url_ + ": " + httplib::to_string(res.error()));
  }
  if (res->status == 400) {
    std::string detail = res->body;
    try {
      const auto j = nlohmann::json::parse(res->body);
      detail = j.value("error", std::string("error")) + ": " + j.value("detail", std::string());
    } catch (const nlohmann::json::exception&) {
    }
    fail(ErrorCode::kProtocolError, "remote rejected request: " + detail);
  }
  if (res->status != 200) {
    fail(ErrorCode::kBackendUnavailable, "remote returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kProtocolError, std::string("remote response is not JSON: ") + e.what());
  }
  auto resp = response_from_json(j);
  if (resp.request_id != req.request_id) {
    fail(ErrorCode::kProtocolError, "remote response request_id does not match");
  }
  return resp;
}

std::string RemoteBackend::identity() const { return "remote(" + base_url_ + ")"; }

std::unique_ptr<SegmentationBackend> make_backend(const std::string& spec) {
  if (spec == "reference") return std::make_unique<ReferenceBackend>();
  if (spec.rfind("reference:", 0) == 0) {
    try {
      return std::make_unique<ReferenceBackend>(std::stod(spec.substr(10)));
    } catch (const std::logic_error&) {
      fail(ErrorCode::kInvalidParam, "bad tau in backend spec '" + spec + "'");
    }
  }
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
    return std::make_unique<RemoteBackend>(spec);
  }
  fail(ErrorCode::kInvalidParam, "unknown backend '" + spec + "'");
}

std::unique_ptr<SegmentationBackend> make_backend(const nlohmann::json& config) {
  if (config.is_string()) return make_backend(config.get<std::string>());
  const std::string type = config.value("type", std::string("reference"));
  if (type == "reference") {
    return std::make_unique<ReferenceBackend>(config.value("tau", kDefaultTau));
  }
  if (type == "remote") {
    RemoteOptions opts;
    opts.timeout = std::chrono::milliseconds(config.value("timeout_ms", 10000));
    opts.send_image = config.value("send_image", true);
    return std::make_unique<RemoteBackend>(config.at("url").get<std::string>(), opts);
  }
  fail(ErrorCode::kInvalidParam, "unknown backend type '" + type + "'");
}

}  // namespace gazeseg
