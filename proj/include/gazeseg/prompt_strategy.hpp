#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/core.hpp"
#include "gazeseg/gaze_stream.hpp"
#include "gazeseg/rng.hpp"

namespace gazeseg {

enum class StrategyKind {
  kAccumulateSample,
  kLinearCombo,
  kIncremental,
  kFixationReplace,
  kFixationAccumulate,
};

enum class LabelMode { kFixedOnes, kRandomBinary };

enum class CapacityMode { kFixed, kRandom1To20 };

// Where live sessions take new points from for the non-fixation strategies.
enum class PointSource { kSamples, kFixations };

std::string_view strategy_name(StrategyKind k);
std::optional<StrategyKind> parse_strategy(std::string_view s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kAccumulateSample;
  int capacity = 20;
  CapacityMode capacity_mode = CapacityMode::kFixed;
  double alpha = 0.6;
  int k = 2;
  LabelMode label_mode = LabelMode::kFixedOnes;
  bool send_prior_mask = false;
  PointSource point_source = PointSource::kSamples;

  // Throws InvalidParam.
  void validate() const;
};

nlohmann::json strategy_to_json(const StrategyConfig& cfg);
// Missing keys take defaults; throws InvalidParam on bad values.
StrategyConfig strategy_from_json(const nlohmann::json& j);

// Capacity for one structure: cfg.capacity, or uniform{1..20} drawn from
// `capacity_seed` in random mode.
int resolve_capacity(const StrategyConfig& cfg, std::uint64_t capacity_seed);

struct HistoryPoint {
  Point2 point;
  int iteration = 0;
};

struct StrategyState {
  std::vector<HistoryPoint> history;
  PointPrompt previous_prompt;  // empty iff iteration == 0
  int iteration = 0;
  Rng rng;

  explicit StrategyState(std::uint64_t seed = 0) : rng(seed) {}
};

std::vector<PromptPoint> label_points(std::span<const Point2> points, LabelMode mode, Rng& rng);

// Each step consumes the state's rng, records the emitted prompt as
// previous_prompt and advances the iteration counter.
PointPrompt next_prompt_accumulate(StrategyState& state, const StrategyConfig& cfg, int capacity,
                                   std::span<const Point2> new_points);

// Throws EmptyInput when new_points is empty.
PointPrompt next_prompt_linear(StrategyState& state, const StrategyConfig& cfg, int capacity,
                               std::span<const Point2> new_points);

// Takes the first k of new_points; throws InsufficientPoints when fewer.
PointPrompt next_prompt_incremental(StrategyState& state, const StrategyConfig& cfg, int capacity,
                                    std::span<const Point2> new_points);

enum class FixationMode { kReplace, kAccumulate };

// Throws NoFixations when `fixations` is empty; the state is left untouched.
PointPrompt next_prompt_fixation(StrategyState& state, const StrategyConfig& cfg, int capacity,
                                 std::span<const Fixation> fixations, FixationMode mode);

// Dispatch on cfg.kind. For the fixation kinds new points are taken to be
// fixation centroids (sample_count 1, no timing).
PointPrompt next_prompt(StrategyState& state, const StrategyConfig& cfg, int capacity,
                        std::span<const Point2> new_points);

// Blend of each current point with its nearest previous prompt point
// (Euclidean, lowest index on ties): alpha * previous + (1 - alpha) * current.
Point2 blend_with_nearest(Point2 current, std::span<const PromptPoint> previous, double alpha);

}  // namespace gazeseg
