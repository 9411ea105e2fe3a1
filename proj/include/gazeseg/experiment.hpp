#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/data_io.hpp"
#include "gazeseg/gaze_synth.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/prompt_strategy.hpp"
#include "gazeseg/seg_backend.hpp"

namespace gazeseg {

// Proportion triples in the column order used by the result tables:
// (prop_gt, prop_out, prop_mask_diff), given in percent.
RegionProportions proportions_from_percent(double gt, double out, double diff);

// The 20 rows of the accumulation sweep (diff = 0 block first, then the
// mixed block), n_points = {20}.
std::vector<RegionProportions> table3_proportions();
// The 8 mixed-proportion rows shared by the incremental sweep.
std::vector<RegionProportions> table4_proportions();

struct ExperimentGrid {
  std::vector<RegionProportions> proportions;
  std::vector<std::size_t> n_points{20};
};

struct ExperimentConfig {
  nlohmann::json corpus = {{"phantom", nlohmann::json::object()}};
  nlohmann::json backend = "reference";
  StrategyConfig strategy;
  ExperimentGrid grid;
  int iterations = 5;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_path = "results";
  std::filesystem::path base_dir;  // resolves relative corpus paths
  int jobs = 1;

  // Throws InvalidParam.
  void validate() const;
};

// Parses the experiment document. "grid" may be replaced by
// "grid_preset": "table3" | "table4". Throws InvalidParam.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

struct CaseRecord {
  std::string case_id;
  int slice_index = 0;
  std::string structure;
  int iteration = 1;  // 1-based
  double dice = 0.0;
};

struct ResultRow {
  double prop_gt = 0.0;  // percent
  double prop_out = 0.0;
  double prop_mask_diff = 0.0;
  std::size_t num_points = 0;
  std::string strategy;
  AggregateStat dice;  // over instances, final iteration
  std::vector<CaseRecord> per_case;  // sorted by (case, slice, structure, iteration)

  // Mean dice over instances at each iteration, index 0 = iteration 1.
  std::vector<double> mean_by_iteration() const;
};

// One (instance, grid cell) unit: the dice trajectory across iterations.
// Iteration 0 draws points against gt only; later iterations draw against
// the current prediction's mask difference.
std::vector<double> run_instance(const StructureInstance& inst, const RegionProportions& props,
                                 std::size_t n_points, const ExperimentConfig& cfg,
                                 SegmentationBackend& backend);

std::vector<ResultRow> run_synthetic_experiment(const ExperimentConfig& cfg, const Corpus& corpus,
                                                SegmentationBackend& backend);
// Loads the corpus and backend named by cfg. Throws CorpusError, BackendUnavailable.
std::vector<ResultRow> run_synthetic_experiment(const ExperimentConfig& cfg);

struct TwoPassConfig {
  std::size_t n_points = 20;
  RegionProportions correction = {0.2, 0.7, 0.1};
  bool send_prior_mask = false;
  LabelMode label_mode = LabelMode::kFixedOnes;
  std::uint64_t seed = 0;
};

struct TwoPassResult {
  double base_dice = 0.0;
  double corrected_dice = 0.0;
  Mask base_mask;
  Mask corrected_mask;
  RegionCounts correction_counts{};
};

// Pass 1 prompts with gt-only points; pass 2 prompts with mask-correction
// points drawn against the base prediction. Throws EmptyGroundTruth.
TwoPassResult run_two_pass(const StructureInstance& inst, const TwoPassConfig& cfg,
                           SegmentationBackend& backend);

std::string format_results_csv(const std::vector<ResultRow>& rows);
std::string format_per_case_csv(const std::vector<ResultRow>& rows);

// Writes results.csv, per_case.csv and manifest.json into dir. Throws
// IoError, InvalidParam on an empty row list.
void emit_tables(const std::vector<ResultRow>& rows, const std::filesystem::path& dir,
                 const nlohmann::json& manifest = nlohmann::json::object());

// Run manifest: seed, config hash, backend identity, timings.
nlohmann::json run_manifest(const ExperimentConfig& cfg, const std::string& backend_identity,
                            double elapsed_ms, std::size_t instances);

}  // namespace gazeseg
