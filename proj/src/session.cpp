#include "gazeseg/session.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gazeseg/codec.hpp"
#include "gazeseg/error.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/rle.hpp"

namespace gazeseg {

using nlohmann::json;

std::string_view phase_name(SessionPhase p) {
  switch (p) {
    case SessionPhase::kIdle: return "idle";
    case SessionPhase::kLoaded: return "loaded";
    case SessionPhase::kSegmenting: return "segmenting";
    case SessionPhase::kFinalized: return "finalized";
  }
  return "idle";
}

namespace {

constexpr EventKind kAllKinds[] = {EventKind::kGaze, EventKind::kPrompt, EventKind::kMask, EventKind::kKey,
                                   EventKind::kLoad, EventKind::kFinalize, EventKind::kError};

bool is_inbound(const std::string& type) {
  return type == "hello" || type == "load_case" || type == "start_structure" || type == "gaze" ||
         type == "box" || type == "key";
}

}  // namespace

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::kGaze: return "gaze";
    case EventKind::kPrompt: return "prompt";
    case EventKind::kMask: return "mask";
    case EventKind::kKey: return "key";
    case EventKind::kLoad: return "load";
    case EventKind::kFinalize: return "finalize";
    case EventKind::kError: return "error";
  }
  return "error";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : kAllKinds) {
    if (event_kind_name(k) == s) return k;
  }
  return std::nullopt;
}

std::string format_event_line(const SessionEvent& e) {
  return json{{"t", e.t}, {"kind", event_kind_name(e.kind)}, {"payload", e.payload}}.dump();
}

std::vector<SessionEvent> parse_session_log(std::string_view text) {
  std::vector<SessionEvent> events;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorCode::kCorruptLog, where + ": not valid JSON");
    }
    if (!j.is_object() || !j.contains("t") || !j["t"].is_number() || !j.contains("kind") ||
        !j["kind"].is_string() || !j.contains("payload") || !j["payload"].is_object() ||
        !j["payload"].contains("type") || !j["payload"]["type"].is_string()) {
      fail(ErrorCode::kCorruptLog, where + ": expected {\"t\",\"kind\",\"payload\":{\"type\",...}}");
    }
    const auto kind = parse_event_kind(j["kind"].get<std::string>());
    if (!kind) fail(ErrorCode::kCorruptLog, where + ": unknown event kind");
    SessionEvent e{j["t"].get<double>(), *kind, std::move(j["payload"])};
    if (!events.empty() && !(e.t > events.back().t)) {
      fail(ErrorCode::kCorruptLog, where + ": timestamps must increase strictly");
    }
    events.push_back(std::move(e));
  }
  return events;
}

SessionConfig session_config_from_json(const json& j) {
  SessionConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) fail(ErrorCode::kInvalidParam, "session config must be a JSON object");
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.cadence_ms = j.value("cadence_ms", cfg.cadence_ms);
    cfg.evaluation_mode = j.value("evaluation_mode", cfg.evaluation_mode);
    if (j.contains("fixation")) {
      cfg.fixation.dispersion_px = j["fixation"].value("dispersion_px", cfg.fixation.dispersion_px);
      cfg.fixation.min_duration_ms = j["fixation"].value("min_duration_ms", cfg.fixation.min_duration_ms);
    }
    if (j.contains("viewport")) cfg.viewport = viewport_from_json(j["viewport"]);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidParam, std::string("bad session config: ") + e.what());
  }
  if (!(cfg.cadence_ms > 0.0)) fail(ErrorCode::kInvalidParam, "cadence_ms must be > 0");
  if (!(cfg.fixation.dispersion_px > 0.0 && cfg.fixation.min_duration_ms > 0.0)) {
    fail(ErrorCode::kInvalidParam, "fixation parameters must be > 0");
  }
  return cfg;
}

json session_config_to_json(const SessionConfig& cfg) {
  return {{"seed", cfg.seed},
          {"cadence_ms", cfg.cadence_ms},
          {"evaluation_mode", cfg.evaluation_mode},
          {"fixation",
           {{"dispersion_px", cfg.fixation.dispersion_px}, {"min_duration_ms", cfg.fixation.min_duration_ms}}},
          {"viewport", viewport_to_json(cfg.viewport)}};
}

// ---- session ---------------------------------------------------------------

Session::Session(SessionConfig config, std::shared_ptr<const Corpus> corpus,
                 std::shared_ptr<SegmentationBackend> backend, Clock clock)
    : config_(std::move(config)),
      corpus_(std::move(corpus)),
      backend_(std::move(backend)),
      clock_(std::move(clock)),
      viewport_(config_.viewport) {
  json cfg = session_config_to_json(config_);
  cfg.erase("seed");
  record(EventKind::kLoad, {{"type", "session_start"}, {"config", cfg}});
}

void Session::record(EventKind kind, json payload) {
  double t = clock_ ? clock_() : 0.0;
  if (!(t > last_t_)) t = last_t_ < 0.0 ? 0.0 : last_t_ + 0.001;
  if (!(t > last_t_)) t = std::nextafter(last_t_, 1e300);
  last_t_ = t;
  log_.push_back({t, kind, std::move(payload)});
  if (sink_) sink_(log_.back());
}

json Session::error(std::string_view code, std::string_view detail) {
  json msg{{"type", "error"}, {"code", code}, {"detail", detail}};
  record(EventKind::kError, msg);
  return msg;
}

std::string Session::log_text() const {
  std::string out;
  for (const auto& e : log_) out += format_event_line(e) + "\n";
  return out;
}

std::vector<json> Session::handle_text(std::string_view text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception&) {
    record(EventKind::kError, {{"type", "invalid"}, {"raw", std::string(text.substr(0, 256))}});
    return {error("bad_message", "message is not valid JSON")};
  }
  return handle_message(msg);
}

std::vector<json> Session::handle_message(const json& msg) {
  const std::string type =
      msg.is_object() && msg.contains("type") && msg["type"].is_string() ? msg["type"].get<std::string>() : "";
  if (!is_inbound(type)) {
    record(EventKind::kError, {{"type", "invalid"}, {"message", msg}});
    return {error("bad_message", type.empty() ? "message needs a string \"type\"" : "unknown type '" + type + "'")};
  }
  EventKind kind = EventKind::kLoad;
  if (type == "gaze") kind = EventKind::kGaze;
  if (type == "box") kind = EventKind::kPrompt;
  if (type == "key") kind = EventKind::kKey;
  record(kind, msg);
  try {
    return dispatch(msg, type);
  } catch (const json::exception& e) {
    return {error("bad_message", e.what())};
  } catch (const Error& e) {
    return {error(to_string(e.code()), e.detail())};
  }
}

std::vector<json> Session::dispatch(const json& msg, const std::string& type) {
  if (type == "hello") {
    if (msg.value("proto", 1) != 1) return {error("bad_message", "unsupported protocol version")};
    if (msg.contains("viewport")) viewport_ = viewport_from_json(msg["viewport"]);
    return {};
  }
  if (type == "load_case") return on_load_case(msg);
  if (type == "start_structure") return on_start_structure(msg);
  if (type == "gaze") return on_gaze(msg);
  if (type == "box") return on_box(msg);
  return on_key(msg);
}

std::vector<json> Session::on_load_case(const json& msg) {
  if (phase_ == SessionPhase::kSegmenting) return {error("bad_phase", "finish the current structure first")};
  const auto case_id = msg.at("case_id").get<std::string>();
  const int slice_index = msg.value("slice_index", 0);
  const CaseSlice* slice = corpus_ ? corpus_->find(case_id, slice_index) : nullptr;
  if (slice == nullptr) return {error("case_not_found", case_id + "/" + std::to_string(slice_index))};
  slice_ = slice;
  phase_ = SessionPhase::kLoaded;
  gt_.reset();
  current_mask_.reset();
  json structures = json::array();
  for (const auto& inst : corpus_->instances()) {
    if (inst.case_id == case_id && inst.slice_index == slice_index) structures.push_back(inst.key);
  }
  const auto& img = *slice_->image;
  return {{{"type", "case_loaded"},
           {"case_id", case_id},
           {"slice_index", slice_index},
           {"image_png_b64",
            base64_encode(png_encode_gray8(to_gray8(img.height(), img.width(), img.intensities())))},
           {"H", img.height()},
           {"W", img.width()},
           {"viewport", viewport_to_json(viewport_)},
           {"structures", structures}}};
}

std::vector<json> Session::on_start_structure(const json& msg) {
  if (phase_ != SessionPhase::kLoaded && phase_ != SessionPhase::kFinalized) {
    return {error("bad_phase", "start_structure needs a loaded case")};
  }
  const auto name = msg.at("structure").get<std::string>();
  const std::string mode = msg.value("mode", std::string("gaze"));
  if (mode != "gaze" && mode != "bbox") return {error("bad_message", "mode must be gaze or bbox")};
  const StrategyConfig strategy =
      msg.contains("strategy") ? strategy_from_json(msg["strategy"]) : StrategyConfig{};

  std::optional<Mask> gt;
  for (const auto& inst : corpus_->instances()) {
    if (inst.case_id == slice_->case_id && inst.slice_index == slice_->slice_index && inst.key == name) {
      gt = inst.gt;
    }
  }
  if (!gt && !parse_structure(name.substr(0, name.find('#')))) {
    return {error("unknown_structure", name)};
  }

  structure_ = name;
  gt_ = std::move(gt);
  mode_ = mode == "bbox" ? PromptMode::kBbox : PromptMode::kGaze;
  strategy_ = strategy;
  const std::string unit = slice_->case_id + "/" + std::to_string(slice_->slice_index);
  const auto n = static_cast<std::uint64_t>(structures_started_);
  state_.emplace(derive_seed(config_.seed, unit, name, n, SeedStream::kSession));
  capacity_ = strategy_.kind == StrategyKind::kIncremental
                  ? strategy_.capacity
                  : resolve_capacity(strategy_, derive_seed(config_.seed, unit, name, n, SeedStream::kCapacity));
  ++structures_started_;
  buffer_.clear();
  current_mask_.reset();
  iteration_ = 0;
  structure_start_t_ = log_.back().t;
  phase_ = SessionPhase::kSegmenting;
  return {};
}

std::vector<json> Session::on_gaze(const json& msg) {
  if (phase_ != SessionPhase::kSegmenting) return {error("bad_phase", "gaze arrives only while segmenting")};
  const auto& samples = msg.at("samples");
  if (!samples.is_array()) return {error("bad_message", "samples must be an array")};
  std::vector<GazeSample> mapped;
  mapped.reserve(samples.size());
  const auto& img = *slice_->image;
  for (const auto& s : samples) {
    if (!s.is_array() || s.size() != 3) return {error("bad_message", "each sample must be [t, x, y]")};
    const GazeSample screen{s[1].get<double>(), s[2].get<double>(), s[0].get<double>(), true};
    mapped.push_back(map_screen_to_image(screen, viewport_, img.height(), img.width()));
  }
  // In bbox mode gaze is recorded for analysis only.
  if (mode_ == PromptMode::kGaze) buffer_.insert(buffer_.end(), mapped.begin(), mapped.end());
  return {};
}

std::vector<json> Session::on_box(const json& msg) {
  if (phase_ != SessionPhase::kSegmenting || mode_ != PromptMode::kBbox) {
    return {error("bad_phase", "box prompts need a bbox-mode structure")};
  }
  const Box box{msg.at("r0").get<int>(), msg.at("c0").get<int>(), msg.at("r1").get<int>(),
                msg.at("c1").get<int>()};
  if (!box.ordered()) return {error(to_string(ErrorCode::kProtocolError), "box corners are not ordered")};
  if (box.degenerate()) return {error(to_string(ErrorCode::kProtocolError), "box is a single pixel")};
  const auto prompt = PointPrompt::padded(1, {});
  record(EventKind::kPrompt, {{"type", "prompt"},
                              {"source", "box"},
                              {"iteration", iteration_ + 1},
                              {"status", "ok"},
                              {"box", {box.r0, box.c0, box.r1, box.c1}}});
  return run_backend(prompt, box);
}

std::vector<json> Session::on_key(const json& msg) {
  const auto name = msg.at("name").get<std::string>();
  if (name != "Enter") return {};
  if (phase_ != SessionPhase::kSegmenting) return {error("bad_phase", "Enter finalizes a structure in progress")};
  const double elapsed = log_.back().t - structure_start_t_;
  const auto& img = *slice_->image;
  const Mask final_mask = current_mask_ ? *current_mask_ : Mask(img.height(), img.width());
  const auto d = score(final_mask);
  json logged{{"type", "done"},
              {"structure", structure_},
              {"elapsed_ms", elapsed},
              {"iterations", iteration_},
              {"final_rle", rle_to_json(final_mask)},
              {"dice", d ? json(*d) : json(nullptr)}};
  json out = logged;
  if (!config_.evaluation_mode) out["dice"] = nullptr;
  record(EventKind::kFinalize, std::move(logged));
  phase_ = SessionPhase::kFinalized;
  buffer_.clear();
  return {out};
}

std::optional<double> Session::score(const Mask& m) const {
  if (!gt_) return std::nullopt;
  return dice(m, *gt_).value;
}

std::vector<json> Session::run_backend(const PointPrompt& prompt, const std::optional<Box>& box) {
  SegmentationRequest req;
  req.request_id = slice_->case_id + "/" + std::to_string(slice_->slice_index) + "/" + structure_ + "/" +
                   std::to_string(iteration_ + 1);
  req.case_id = slice_->case_id;
  req.slice_index = slice_->slice_index;
  req.image = slice_->image;
  req.prompt = prompt;
  req.box = box;
  if (strategy_.send_prior_mask && current_mask_) req.prior_mask = *current_mask_;
  SegmentationResponse resp;
  try {
    resp = backend_->segment(req);
    if (!resp.mask.same_shape(Mask(slice_->image->height(), slice_->image->width()))) {
      fail(ErrorCode::kProtocolError, "backend mask shape differs from image");
    }
  } catch (const Error& e) {
    return {error(to_string(e.code()), e.detail())};
  }
  ++iteration_;
  current_mask_ = std::move(resp.mask);
  const auto d = score(*current_mask_);
  json logged{{"type", "mask"},
              {"iteration", iteration_},
              {"rle", rle_to_json(*current_mask_)},
              {"dice", d ? json(*d) : json(nullptr)},
              {"latency_ms", resp.latency_ms}};
  json out = logged;
  if (!config_.evaluation_mode) out["dice"] = nullptr;
  record(EventKind::kMask, std::move(logged));
  return {out};
}

std::vector<json> Session::recompute_tick() {
  if (phase_ != SessionPhase::kSegmenting || mode_ != PromptMode::kGaze || buffer_.empty()) return {};
  GazeStream window{std::move(buffer_), GazeSource::kTracker};
  buffer_.clear();
  json event{{"type", "prompt"}, {"source", "tick"}, {"iteration", iteration_ + 1}, {"samples", window.samples.size()}};

  const bool fixation_kind =
      strategy_.kind == StrategyKind::kFixationReplace || strategy_.kind == StrategyKind::kFixationAccumulate;
  PointPrompt prompt;
  try {
    if (fixation_kind) {
      const auto fixations = detect_fixations(window, config_.fixation);
      prompt = next_prompt_fixation(*state_, strategy_, capacity_, fixations,
                                    strategy_.kind == StrategyKind::kFixationReplace ? FixationMode::kReplace
                                                                                    : FixationMode::kAccumulate);
    } else {
      std::vector<Point2> points;
      if (strategy_.point_source == PointSource::kFixations) {
        for (const auto& f : detect_fixations(window, config_.fixation)) points.push_back({f.cx, f.cy});
        if (points.empty()) fail(ErrorCode::kNoFixations, "the gaze window produced no fixations");
      } else {
        for (const auto& s : window.samples) {
          if (s.in_image) points.push_back({s.x, s.y});
        }
        if (points.empty()) fail(ErrorCode::kEmptyInput, "no gaze sample fell inside the image");
      }
      prompt = next_prompt(*state_, strategy_, capacity_, points);
    }
  } catch (const Error& e) {
    // Nothing to send this tick; the previous mask stays.
    event["status"] = to_string(e.code());
    record(EventKind::kPrompt, std::move(event));
    return {};
  }
  json points = json::array();
  for (const auto& p : prompt.live_points()) points.push_back({p.x, p.y, p.label});
  event["status"] = "ok";
  event["points"] = std::move(points);
  event["capacity"] = prompt.capacity();
  record(EventKind::kPrompt, std::move(event));
  return run_backend(prompt, std::nullopt);
}

// ---- replay ----------------------------------------------------------------

json ReplayReport::to_json() const {
  json rows = json::array();
  for (const auto& s : structures) {
    rows.push_back({{"case_id", s.case_id},
                    {"slice_index", s.slice_index},
                    {"structure", s.structure},
                    {"mode", s.mode},
                    {"duration_ms", s.duration_ms},
                    {"dice_trajectory", s.dice_trajectory},
                    {"final_dice", s.final_dice ? json(*s.final_dice) : json(nullptr)}});
  }
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.1f \xC2\xB1 %.1f s", duration_mean_s, duration_std_s);
  return {{"structures", rows},
          {"duration_mean_s", duration_mean_s},
          {"duration_std_s", duration_std_s},
          {"timing", timing},
          {"masks_compared", masks_compared},
          {"masks_matched", masks_matched},
          {"exact_replay", exact_replay}};
}

ReplayReport replay_session(const std::vector<SessionEvent>& log, std::shared_ptr<SegmentationBackend> backend,
                            std::uint64_t seed, std::shared_ptr<const Corpus> corpus, SessionConfig config) {
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (!(log[i].t > log[i - 1].t)) fail(ErrorCode::kCorruptLog, "timestamps must increase strictly");
  }
  if (!log.empty() && log.front().payload.value("type", "") == "session_start") {
    json cfg = log.front().payload.value("config", json::object());
    config = session_config_from_json(cfg);
  }
  config.seed = seed;

  ReplayReport report;
  std::string case_id;
  int slice_index = 0;
  StructureTiming* open = nullptr;
  double open_start = 0.0;
  for (const auto& e : log) {
    const auto type = e.payload.value("type", std::string());
    if (type == "load_case") {
      case_id = e.payload.value("case_id", std::string());
      slice_index = e.payload.value("slice_index", 0);
    } else if (type == "start_structure") {
      report.structures.push_back({case_id, slice_index, e.payload.value("structure", std::string()),
                                   e.payload.value("mode", std::string("gaze")), 0.0, {}, std::nullopt});
      open = &report.structures.back();
      open_start = e.t;
    } else if (type == "mask" && open != nullptr && e.payload.contains("dice") && e.payload["dice"].is_number()) {
      open->dice_trajectory.push_back(e.payload["dice"].get<double>());
    } else if (type == "done" && open != nullptr) {
      open->duration_ms = e.t - open_start;
      if (e.payload.contains("dice") && e.payload["dice"].is_number()) open->final_dice = e.payload["dice"].get<double>();
      open = nullptr;
    }
  }
  // Structures never finalized carry no duration.
  std::vector<double> durations;
  for (const auto& s : report.structures) {
    if (s.duration_ms > 0.0) durations.push_back(s.duration_ms / 1000.0);
  }
  if (!durations.empty()) {
    const auto stat = aggregate(durations);
    report.duration_mean_s = stat.mean;
    report.duration_std_s = stat.std;
  }

  double now = 0.0;
  Session session(config, std::move(corpus), std::move(backend), [&now] { return now; });
  for (std::size_t i = 1; i < log.size(); ++i) {
    const auto& e = log[i];
    const auto type = e.payload.value("type", std::string());
    now = e.t;
    if (is_inbound(type)) {
      session.handle_message(e.payload);
    } else if (type == "prompt" && e.payload.value("source", std::string()) == "tick") {
      session.recompute_tick();
    }
  }

  std::vector<const json*> original;
  std::vector<const json*> replayed;
  for (const auto& e : log) {
    if (e.kind == EventKind::kMask) original.push_back(&e.payload);
  }
  for (const auto& e : session.log()) {
    if (e.kind == EventKind::kMask) replayed.push_back(&e.payload);
  }
  report.masks_compared = original.size();
  for (std::size_t i = 0; i < std::min(original.size(), replayed.size()); ++i) {
    if (original[i]->value("rle", json()) == replayed[i]->value("rle", json()) &&
        original[i]->value("iteration", -1) == replayed[i]->value("iteration", -2)) {
      ++report.masks_matched;
    }
  }
  report.exact_replay = original.size() == replayed.size() && report.masks_matched == original.size();
  return report;
}

}  // namespace gazeseg
