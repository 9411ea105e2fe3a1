#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/data_io.hpp"
#include "gazeseg/gaze_stream.hpp"
#include "gazeseg/prompt_strategy.hpp"
#include "gazeseg/seg_backend.hpp"

namespace gazeseg {

enum class SessionPhase { kIdle, kLoaded, kSegmenting, kFinalized };
std::string_view phase_name(SessionPhase p);

enum class EventKind { kGaze, kPrompt, kMask, kKey, kLoad, kFinalize, kError };
std::string_view event_kind_name(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct SessionEvent {
  double t = 0.0;  // ms since session start
  EventKind kind = EventKind::kLoad;
  nlohmann::json payload;  // always carries "type"
};

std::string format_event_line(const SessionEvent& e);
// Throws CorruptLog on malformed lines, unknown kinds or non-increasing t.
std::vector<SessionEvent> parse_session_log(std::string_view text);

struct SessionConfig {
  std::uint64_t seed = 0;
  double cadence_ms = 200.0;
  // Dice goes to the client only in evaluation mode; it is always logged.
  bool evaluation_mode = false;
  FixationParams fixation;
  Viewport viewport;
};

SessionConfig session_config_from_json(const nlohmann::json& j);
nlohmann::json session_config_to_json(const SessionConfig& cfg);

enum class PromptMode { kGaze, kBbox };

// One annotator connection. Not thread-safe: the owner serializes calls.
class Session {
 public:
  using Clock = std::function<double()>;  // ms since session start
  using Sink = std::function<void(const SessionEvent&)>;

  Session(SessionConfig config, std::shared_ptr<const Corpus> corpus,
          std::shared_ptr<SegmentationBackend> backend, Clock clock);

  // Logs the inbound message, then returns the outbound messages.
  std::vector<nlohmann::json> handle_message(const nlohmann::json& msg);
  // As handle_message, with JSON parse failures reported as error messages.
  std::vector<nlohmann::json> handle_text(std::string_view text);

  // Drains the gaze buffer through the strategy and backend. Returns the
  // outbound messages (a mask, or an error); empty when the buffer was empty.
  std::vector<nlohmann::json> recompute_tick();

  // Appended to on every event; called before the response is returned.
  void set_sink(Sink sink) { sink_ = std::move(sink); }

  SessionPhase phase() const { return phase_; }
  PromptMode mode() const { return mode_; }
  int iteration() const { return iteration_; }
  const std::optional<Mask>& current_mask() const { return current_mask_; }
  std::size_t buffered() const { return buffer_.size(); }
  const std::vector<SessionEvent>& log() const { return log_; }
  const SessionConfig& config() const { return config_; }
  std::string log_text() const;

 private:
  void record(EventKind kind, nlohmann::json payload);
  nlohmann::json error(std::string_view code, std::string_view detail);
  std::vector<nlohmann::json> dispatch(const nlohmann::json& msg, const std::string& type);
  std::vector<nlohmann::json> on_load_case(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_start_structure(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_gaze(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_box(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_key(const nlohmann::json& msg);
  std::vector<nlohmann::json> run_backend(const PointPrompt& prompt, const std::optional<Box>& box);
  std::optional<double> score(const Mask& m) const;

  SessionConfig config_;
  std::shared_ptr<const Corpus> corpus_;
  std::shared_ptr<SegmentationBackend> backend_;
  Clock clock_;
  Sink sink_;

  SessionPhase phase_ = SessionPhase::kIdle;
  PromptMode mode_ = PromptMode::kGaze;
  Viewport viewport_;
  const CaseSlice* slice_ = nullptr;
  std::string structure_;
  std::optional<Mask> gt_;
  StrategyConfig strategy_;
  std::optional<StrategyState> state_;
  int capacity_ = 20;
  std::vector<GazeSample> buffer_;
  std::optional<Mask> current_mask_;
  int iteration_ = 0;
  int structures_started_ = 0;
  double structure_start_t_ = 0.0;
  double last_t_ = -1.0;
  std::vector<SessionEvent> log_;
};

struct StructureTiming {
  std::string case_id;
  int slice_index = 0;
  std::string structure;
  std::string mode;
  double duration_ms = 0.0;
  std::vector<double> dice_trajectory;  // from the log
  std::optional<double> final_dice;
};

struct ReplayReport {
  std::vector<StructureTiming> structures;
  double duration_mean_s = 0.0;
  double duration_std_s = 0.0;  // population
  std::size_t masks_compared = 0;
  std::size_t masks_matched = 0;
  bool exact_replay = false;

  nlohmann::json to_json() const;
};

// Re-feeds the logged inbound messages into a fresh session (clock pinned to
// the logged timestamps, ticks where the log recorded them) and compares
// every regenerated mask with the logged one. Throws CorruptLog.
ReplayReport replay_session(const std::vector<SessionEvent>& log, std::shared_ptr<SegmentationBackend> backend,
                            std::uint64_t seed, std::shared_ptr<const Corpus> corpus,
                            SessionConfig config = {});

}  // namespace gazeseg
