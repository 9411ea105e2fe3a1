#include "gazeseg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "gazeseg/error.hpp"
#include "gazeseg/rng.hpp"

namespace gazeseg {

using nlohmann::json;

RegionProportions proportions_from_percent(double gt, double out, double diff) {
  RegionProportions p{gt / 100.0, diff / 100.0, out / 100.0};
  p.validate();
  return p;
}

std::vector<RegionProportions> table3_proportions() {
  std::vector<RegionProportions> rows;
  for (double gt : {0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 95.0, 100.0}) {
    rows.push_back(proportions_from_percent(gt, 100.0 - gt, 0.0));
  }
  for (const auto& p : table4_proportions()) rows.push_back(p);
  return rows;
}

std::vector<RegionProportions> table4_proportions() {
  constexpr double kRows[8][3] = {{20, 10, 70}, {5, 5, 90},  {40, 10, 50}, {30, 10, 60},
                                  {60, 10, 30}, {70, 10, 20}, {80, 5, 15}, {90, 5, 5}};
  std::vector<RegionProportions> rows;
  for (const auto& r : kRows) rows.push_back(proportions_from_percent(r[0], r[1], r[2]));
  return rows;
}

void ExperimentConfig::validate() const {
  if (iterations < 1) fail(ErrorCode::kInvalidParam, "iterations must be >= 1");
  if (grid.proportions.empty() || grid.n_points.empty()) fail(ErrorCode::kInvalidParam, "grid is empty");
  for (const auto& p : grid.proportions) p.validate();
  for (auto n : grid.n_points) {
    if (n < 1) fail(ErrorCode::kInvalidParam, "n_points must be >= 1");
  }
  if (jobs < 1) fail(ErrorCode::kInvalidParam, "jobs must be >= 1");
  strategy.validate();
}

ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) fail(ErrorCode::kInvalidParam, "experiment config must be a JSON object");
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  try {
    if (j.contains("corpus")) cfg.corpus = j.at("corpus");
    if (j.contains("backend")) cfg.backend = j.at("backend");
    if (j.contains("strategy")) cfg.strategy = strategy_from_json(j.at("strategy"));
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.jobs = j.value("jobs", cfg.jobs);
    if (j.contains("output_path")) cfg.output_path = j.at("output_path").get<std::string>();
    if (j.contains("grid_preset")) {
      const auto preset = j.at("grid_preset").get<std::string>();
      if (preset == "table3") {
        cfg.grid.proportions = table3_proportions();
        cfg.grid.n_points = {20};
      } else if (preset == "table4") {
        cfg.grid.proportions = table4_proportions();
        cfg.grid.n_points = {1, 2, 4, 5};
      } else {
        fail(ErrorCode::kInvalidParam, "unknown grid_preset '" + preset + "'");
      }
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      if (g.contains("proportions")) {
        cfg.grid.proportions.clear();
        for (const auto& p : g.at("proportions")) {
          cfg.grid.proportions.push_back(proportions_from_percent(
              p.value("gt", 0.0), p.value("out", 0.0), p.value("diff", 0.0)));
        }
      }
      if (g.contains("n_points")) cfg.grid.n_points = g.at("n_points").get<std::vector<std::size_t>>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidParam, std::string("bad experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json experiment_to_json(const ExperimentConfig& cfg) {
  json props = json::array();
  for (const auto& p : cfg.grid.proportions) {
    props.push_back({{"gt", p.gt * 100.0}, {"out", p.out * 100.0}, {"diff", p.diff * 100.0}});
  }
  return {
      {"corpus", cfg.corpus},
      {"backend", cfg.backend},
      {"strategy", strategy_to_json(cfg.strategy)},
      {"grid", {{"proportions", props}, {"n_points", cfg.grid.n_points}}},
      {"iterations", cfg.iterations},
      {"master_seed", cfg.master_seed},
      {"output_path", cfg.output_path.string()},
  };
}

std::vector<double> ResultRow::mean_by_iteration() const {
  std::vector<double> sum;
  std::vector<std::size_t> n;
  for (const auto& r : per_case) {
    const auto i = static_cast<std::size_t>(r.iteration - 1);
    if (i >= sum.size()) {
      sum.resize(i + 1, 0.0);
      n.resize(i + 1, 0);
    }
    sum[i] += r.dice;
    ++n[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = n[i] ? sum[i] / static_cast<double>(n[i]) : 0.0;
  return sum;
}

namespace {

std::string unit_key(const StructureInstance& inst) {
  return inst.case_id + "/" + std::to_string(inst.slice_index);
}

// A prompt with no foreground point carries nothing to grow from; the
// prediction is taken to be empty rather than asking the backend.
Mask predict(SegmentationBackend& backend, const StructureInstance& inst, const PointPrompt& prompt,
             const Mask* prior, const std::string& request_id) {
  if (!prompt.has_foreground()) return Mask(inst.gt.height(), inst.gt.width(), inst.gt.structure());
  SegmentationRequest req;
  req.request_id = request_id;
  req.case_id = inst.case_id;
  req.slice_index = inst.slice_index;
  req.image = inst.image;
  req.prompt = prompt;
  if (prior != nullptr) req.prior_mask = *prior;
  auto resp = backend.segment(req);
  if (!resp.mask.same_shape(inst.gt)) fail(ErrorCode::kProtocolError, "backend mask shape differs from image");
  return std::move(resp.mask);
}

}  // namespace

std::vector<double> run_instance(const StructureInstance& inst, const RegionProportions& props,
                                 std::size_t n_points, const ExperimentConfig& cfg,
                                 SegmentationBackend& backend) {
  const std::string unit = unit_key(inst);
  const auto& scfg = cfg.strategy;
  StrategyConfig step_cfg = scfg;
  if (scfg.kind == StrategyKind::kIncremental) step_cfg.k = static_cast<int>(n_points);
  // The incremental prompt grows up to the model's maximum; the other
  // strategies draw their capacity once per structure.
  const int capacity = scfg.kind == StrategyKind::kIncremental
                           ? scfg.capacity
                           : resolve_capacity(scfg, derive_seed(cfg.master_seed, unit, inst.key, 0,
                                                                 SeedStream::kCapacity));
  StrategyState state(derive_seed(cfg.master_seed, unit, inst.key, 0, SeedStream::kStrategy));
  std::optional<Mask> prediction;
  std::vector<double> trajectory;
  trajectory.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    GazeGenConfig gen{props, n_points,
                      derive_seed(cfg.master_seed, unit, inst.key, static_cast<std::uint64_t>(it),
                                  SeedStream::kGeneration)};
    // Before any prediction exists the difference region is empty, so its
    // share is reallocated by the quota rule.
    const Mask* against = nullptr;
    if (props.diff > 0.0) against = prediction ? &*prediction : &inst.gt;
    const auto points = points_of(generate_prompt_points(inst.gt, against, gen));
    const auto prompt = next_prompt(state, step_cfg, capacity, points);
    const Mask* prior = scfg.send_prior_mask && prediction ? &*prediction : nullptr;
    prediction = predict(backend, inst, prompt, prior, unit + "/" + inst.key + "/" + std::to_string(it + 1));
    trajectory.push_back(dice(*prediction, inst.gt).value);
  }
  return trajectory;
}

std::vector<ResultRow> run_synthetic_experiment(const ExperimentConfig& cfg, const Corpus& corpus,
                                                SegmentationBackend& backend) {
  cfg.validate();
  const auto instances = corpus.instances();
  if (instances.empty()) fail(ErrorCode::kCorpusError, "corpus has no structures");

  struct Cell {
    RegionProportions props;
    std::size_t n_points;
  };
  std::vector<Cell> cells;
  for (auto n : cfg.grid.n_points) {
    for (const auto& p : cfg.grid.proportions) cells.push_back({p, n});
  }

  const std::size_t units = cells.size() * instances.size();
  std::vector<std::vector<double>> results(units);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t u = next++; u < units; u = next++) {
      try {
        const auto& cell = cells[u / instances.size()];
        results[u] = run_instance(instances[u % instances.size()], cell.props, cell.n_points, cfg, backend);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next = units;
      }
    }
  };
  const auto jobs = static_cast<std::size_t>(std::min<int>(cfg.jobs, static_cast<int>(units)));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ResultRow> rows;
  rows.reserve(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ResultRow row;
    row.prop_gt = cells[c].props.gt * 100.0;
    row.prop_out = cells[c].props.out * 100.0;
    row.prop_mask_diff = cells[c].props.diff * 100.0;
    row.num_points = cells[c].n_points;
    row.strategy = std::string(strategy_name(cfg.strategy.kind));
    std::vector<double> finals;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& traj = results[c * instances.size() + i];
      for (std::size_t it = 0; it < traj.size(); ++it) {
        row.per_case.push_back({instances[i].case_id, instances[i].slice_index, instances[i].key,
                                static_cast<int>(it + 1), traj[it]});
      }
      finals.push_back(traj.back());
    }
    row.dice = aggregate(finals);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ResultRow> run_synthetic_experiment(const ExperimentConfig& cfg) {
  const Corpus corpus = load_corpus(cfg.corpus, cfg.base_dir);
  auto backend = make_backend(cfg.backend);
  return run_synthetic_experiment(cfg, corpus, *backend);
}

TwoPassResult run_two_pass(const StructureInstance& inst, const TwoPassConfig& cfg,
                           SegmentationBackend& backend) {
  if (inst.gt.empty()) fail(ErrorCode::kEmptyGroundTruth, "ground-truth mask has no pixels");
  const std::string unit = unit_key(inst);
  Rng label_rng(derive_seed(cfg.seed, unit, inst.key, 0, SeedStream::kStrategy));
  const int capacity = static_cast<int>(std::min<std::size_t>(cfg.n_points, kMaxPromptCapacity));

  GazeGenConfig pass1{{1.0, 0.0, 0.0}, cfg.n_points, derive_seed(cfg.seed, unit, inst.key, 1)};
  const auto p1 = points_of(generate_prompt_points(inst.gt, nullptr, pass1));
  const auto prompt1 = PointPrompt::padded(capacity, label_points(p1, cfg.label_mode, label_rng));
  TwoPassResult out;
  out.base_mask = predict(backend, inst, prompt1, nullptr, unit + "/" + inst.key + "/base");
  out.base_dice = dice(out.base_mask, inst.gt).value;

  GazeGenConfig pass2{cfg.correction, cfg.n_points, derive_seed(cfg.seed, unit, inst.key, 2)};
  const auto gen2 = generate_prompt_points(inst.gt, &out.base_mask, pass2);
  out.correction_counts = gen2.counts;
  const auto p2 = points_of(gen2);
  const auto prompt2 = PointPrompt::padded(capacity, label_points(p2, cfg.label_mode, label_rng));
  out.corrected_mask = predict(backend, inst, prompt2, cfg.send_prior_mask ? &out.base_mask : nullptr,
                               unit + "/" + inst.key + "/corrected");
  out.corrected_dice = dice(out.corrected_mask, inst.gt).value;
  return out;
}

namespace {

std::string fixed5(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5f", v);
  return buf;
}

std::string percent(double v) {
  char buf[64];
  const double r = std::round(v);
  if (std::abs(v - r) < 1e-9) {
    std::snprintf(buf, sizeof buf, "%.0f", r);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", v);
  }
  return buf;
}

std::string row_prefix(const ResultRow& r) {
  return percent(r.prop_gt) + "," + percent(r.prop_out) + "," + percent(r.prop_mask_diff) + "," +
         std::to_string(r.num_points) + "," + r.strategy;
}

}  // namespace

std::string format_results_csv(const std::vector<ResultRow>& rows) {
  std::string out = "prop_gt,prop_out,prop_mask_diff,num_points,strategy,dice_mean,dice_std,n\n";
  for (const auto& r : rows) {
    out += row_prefix(r) + "," + fixed5(r.dice.mean) + "," + fixed5(r.dice.std) + "," +
           std::to_string(r.dice.n) + "\n";
  }
  return out;
}

std::string format_per_case_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "prop_gt,prop_out,prop_mask_diff,num_points,strategy,case_id,slice_index,structure,iteration,dice\n";
  for (const auto& r : rows) {
    const std::string prefix = row_prefix(r);
    for (const auto& c : r.per_case) {
      out += prefix + "," + c.case_id + "," + std::to_string(c.slice_index) + "," + c.structure + "," +
             std::to_string(c.iteration) + "," + fixed5(c.dice) + "\n";
    }
  }
  return out;
}

void emit_tables(const std::vector<ResultRow>& rows, const std::filesystem::path& dir,
                 const json& manifest) {
  if (rows.empty()) fail(ErrorCode::kInvalidParam, "no result rows to emit");
  write_text(dir / "results.csv", format_results_csv(rows));
  write_text(dir / "per_case.csv", format_per_case_csv(rows));
  json m = manifest;
  json summary = json::array();
  for (const auto& r : rows) {
    summary.push_back({{"prop_gt", r.prop_gt},
                       {"prop_out", r.prop_out},
                       {"prop_mask_diff", r.prop_mask_diff},
                       {"num_points", r.num_points},
                       {"mean_by_iteration", r.mean_by_iteration()}});
  }
  m["rows"] = std::move(summary);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

json run_manifest(const ExperimentConfig& cfg, const std::string& backend_identity, double elapsed_ms,
                  std::size_t instances) {
  const std::string doc = experiment_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : doc) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(h));
  return {
      {"master_seed", cfg.master_seed},
      {"config_hash", hash},
      {"config", experiment_to_json(cfg)},
      {"backend", backend_identity},
      {"instances", instances},
      {"elapsed_ms", elapsed_ms},
      {"jobs", cfg.jobs},
      {"aggregation", "dice_mean/dice_std: population statistics of final-iteration dice over structures"},
      {"point_budget", "each iteration draws num_points fresh points into the strategy history"},
  };
}

}  // namespace gazeseg
