#include "gazeseg/prompt_strategy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gazeseg/error.hpp"

namespace gazeseg {

std::string_view strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::kAccumulateSample: return "accumulate_sample";
    case StrategyKind::kLinearCombo: return "linear_combo";
    case StrategyKind::kIncremental: return "incremental";
    case StrategyKind::kFixationReplace: return "fixation_replace";
    case StrategyKind::kFixationAccumulate: return "fixation_accumulate";
  }
  return "accumulate_sample";
}

std::optional<StrategyKind> parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::kAccumulateSample, StrategyKind::kLinearCombo,
                 StrategyKind::kIncremental, StrategyKind::kFixationReplace,
                 StrategyKind::kFixationAccumulate}) {
    if (strategy_name(k) == s) return k;
  }
  return std::nullopt;
}

void StrategyConfig::validate() const {
  if (capacity < 1 || capacity > kMaxPromptCapacity) {
    fail(ErrorCode::kInvalidParam, "capacity must be in [1, 50]");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kInvalidParam, "alpha must be in [0, 1]");
  if (k < 1) fail(ErrorCode::kInvalidParam, "k must be >= 1");
}

nlohmann::json strategy_to_json(const StrategyConfig& cfg) {
  return {
      {"kind", strategy_name(cfg.kind)},
      {"capacity", cfg.capacity},
      {"capacity_mode", cfg.capacity_mode == CapacityMode::kFixed ? "fixed" : "random_1_to_20"},
      {"alpha", cfg.alpha},
      {"k", cfg.k},
      {"label_mode", cfg.label_mode == LabelMode::kFixedOnes ? "fixed_ones" : "random_binary"},
      {"send_prior_mask", cfg.send_prior_mask},
      {"point_source", cfg.point_source == PointSource::kSamples ? "samples" : "fixations"},
  };
}

StrategyConfig strategy_from_json(const nlohmann::json& j) {
  StrategyConfig cfg;
  if (!j.is_object()) fail(ErrorCode::kInvalidParam, "strategy must be a JSON object");
  try {
    if (j.contains("kind")) {
      const auto kind = parse_strategy(j.at("kind").get<std::string>());
      if (!kind) fail(ErrorCode::kInvalidParam, "unknown strategy kind");
      cfg.kind = *kind;
    }
    cfg.capacity = j.value("capacity", cfg.capacity);
    const std::string cap_mode = j.value("capacity_mode", std::string("fixed"));
    if (cap_mode == "fixed") {
      cfg.capacity_mode = CapacityMode::kFixed;
    } else if (cap_mode == "random_1_to_20") {
      cfg.capacity_mode = CapacityMode::kRandom1To20;
    } else {
      fail(ErrorCode::kInvalidParam, "unknown capacity_mode");
    }
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.k = j.value("k", cfg.k);
    const std::string label = j.value("label_mode", std::string("fixed_ones"));
    if (label == "fixed_ones") {
      cfg.label_mode = LabelMode::kFixedOnes;
    } else if (label == "random_binary") {
      cfg.label_mode = LabelMode::kRandomBinary;
    } else {
      fail(ErrorCode::kInvalidParam, "unknown label_mode");
    }
    cfg.send_prior_mask = j.value("send_prior_mask", false);
    const std::string src = j.value("point_source", std::string("samples"));
    if (src == "samples") {
      cfg.point_source = PointSource::kSamples;
    } else if (src == "fixations") {
      cfg.point_source = PointSource::kFixations;
    } else {
      fail(ErrorCode::kInvalidParam, "unknown point_source");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidParam, std::string("bad strategy config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

int resolve_capacity(const StrategyConfig& cfg, std::uint64_t capacity_seed) {
  if (cfg.capacity_mode == CapacityMode::kFixed) return cfg.capacity;
  Rng rng(capacity_seed);
  return 1 + static_cast<int>(uniform_index(rng, 20));
}

std::vector<PromptPoint> label_points(std::span<const Point2> points, LabelMode mode, Rng& rng) {
  std::vector<PromptPoint> out;
  out.reserve(points.size());
  std::bernoulli_distribution coin(0.5);
  for (const auto& p : points) {
    const int label =
        mode == LabelMode::kFixedOnes ? kLabelForeground : (coin(rng) ? kLabelForeground : kLabelBackground);
    out.push_back({p.x, p.y, label});
  }
  return out;
}

namespace {

void append_history(StrategyState& state, std::span<const Point2> points) {
  for (const auto& p : points) state.history.push_back({p, state.iteration});
}

// Uniform subset of the history of size min(capacity, |history|). When the
// whole history fits it is used in insertion order.
std::vector<Point2> select_from_history(StrategyState& state, int capacity) {
  const std::size_t cap = static_cast<std::size_t>(capacity);
  std::vector<Point2> chosen;
  if (state.history.size() <= cap) {
    chosen.reserve(state.history.size());
    for (const auto& h : state.history) chosen.push_back(h.point);
    return chosen;
  }
  const auto idx = sample_without_replacement(state.rng, state.history.size(), cap);
  chosen.reserve(cap);
  for (auto i : idx) chosen.push_back(state.history[i].point);
  return chosen;
}

PointPrompt finish(StrategyState& state, const StrategyConfig& cfg, int capacity,
                   std::span<const Point2> live) {
  const auto labeled = label_points(live, cfg.label_mode, state.rng);
  auto prompt = PointPrompt::padded(capacity, labeled);
  state.previous_prompt = prompt;
  ++state.iteration;
  return prompt;
}

}  // namespace

PointPrompt next_prompt_accumulate(StrategyState& state, const StrategyConfig& cfg, int capacity,
                                   std::span<const Point2> new_points) {
  append_history(state, new_points);
  const auto chosen = select_from_history(state, capacity);
  return finish(state, cfg, capacity, chosen);
}

Point2 blend_with_nearest(Point2 current, std::span<const PromptPoint> previous, double alpha) {
  const PromptPoint* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& q : previous) {
    if (q.label == kLabelPadding) continue;
    const double d = std::hypot(q.x - current.x, q.y - current.y);
    if (d < best_d) {
      best_d = d;
      best = &q;
    }
  }
  if (best == nullptr) return current;
  if (alpha == 1.0) return {best->x, best->y};
  if (alpha == 0.0) return current;
  return {alpha * best->x + (1.0 - alpha) * current.x, alpha * best->y + (1.0 - alpha) * current.y};
}

PointPrompt next_prompt_linear(StrategyState& state, const StrategyConfig& cfg, int capacity,
                               std::span<const Point2> new_points) {
  if (new_points.empty()) fail(ErrorCode::kEmptyInput, "linear_combo needs at least one new point");
  const auto current = new_points.first(std::min(new_points.size(), static_cast<std::size_t>(capacity)));
  append_history(state, current);
  std::vector<Point2> out;
  out.reserve(current.size());
  if (state.iteration == 0 || state.previous_prompt.live_count() == 0) {
    out.assign(current.begin(), current.end());
  } else {
    const auto& prev = state.previous_prompt.points();
    for (const auto& p : current) out.push_back(blend_with_nearest(p, prev, cfg.alpha));
  }
  return finish(state, cfg, capacity, out);
}

PointPrompt next_prompt_incremental(StrategyState& state, const StrategyConfig& cfg, int capacity,
                                    std::span<const Point2> new_points) {
  const auto k = static_cast<std::size_t>(cfg.k);
  if (new_points.size() < k) {
    fail(ErrorCode::kInsufficientPoints, "incremental strategy needs k new points per iteration");
  }
  append_history(state, new_points.first(k));
  const auto chosen = select_from_history(state, capacity);
  return finish(state, cfg, capacity, chosen);
}

PointPrompt next_prompt_fixation(StrategyState& state, const StrategyConfig& cfg, int capacity,
                                 std::span<const Fixation> fixations, FixationMode mode) {
  if (fixations.empty()) fail(ErrorCode::kNoFixations, "the gaze window produced no fixations");
  std::vector<Point2> centroids;
  centroids.reserve(fixations.size());
  for (const auto& f : fixations) centroids.push_back({f.cx, f.cy});
  append_history(state, centroids);
  if (mode == FixationMode::kAccumulate) {
    const auto chosen = select_from_history(state, capacity);
    return finish(state, cfg, capacity, chosen);
  }
  std::vector<Point2> chosen;
  chosen.reserve(static_cast<std::size_t>(capacity));
  for (int i = 0; i < capacity; ++i) chosen.push_back(centroids[uniform_index(state.rng, centroids.size())]);
  return finish(state, cfg, capacity, chosen);
}

PointPrompt next_prompt(StrategyState& state, const StrategyConfig& cfg, int capacity,
                        std::span<const Point2> new_points) {
  switch (cfg.kind) {
    case StrategyKind::kAccumulateSample:
      return next_prompt_accumulate(state, cfg, capacity, new_points);
    case StrategyKind::kLinearCombo:
      return next_prompt_linear(state, cfg, capacity, new_points);
    case StrategyKind::kIncremental:
      return next_prompt_incremental(state, cfg, capacity, new_points);
    case StrategyKind::kFixationReplace:
    case StrategyKind::kFixationAccumulate: {
      std::vector<Fixation> fixations;
      fixations.reserve(new_points.size());
      for (const auto& p : new_points) fixations.push_back({p.x, p.y, 0.0, 0.0, 1});
      return next_prompt_fixation(state, cfg, capacity, fixations,
                                  cfg.kind == StrategyKind::kFixationReplace ? FixationMode::kReplace
                                                                           : FixationMode::kAccumulate);
    }
  }
  fail(ErrorCode::kInvalidParam, "unknown strategy");
}

}  // namespace gazeseg
