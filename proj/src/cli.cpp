#include "gazeseg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>

#include "gazeseg/codec.hpp"
#include "gazeseg/data_io.hpp"
#include "gazeseg/error.hpp"
#include "gazeseg/experiment.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/prompt_strategy.hpp"
#include "gazeseg/rle.hpp"
#include "gazeseg/session.hpp"
#include "gazeseg/session_server.hpp"

namespace gazeseg {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidParam, path.string() + ": " + e.what());
  }
}

std::filesystem::path dir_of(const std::filesystem::path& p) {
  return p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
}

Mask read_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P') {
    const auto img = png_decode_gray8(bytes);
    Mask m(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) m.set(i, img.pixels[i] != 0);
    return m;
  }
  try {
    return rle_from_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidParam, path.string() + ": expected an RLE JSON or PNG mask");
  }
}

struct PhantomArgs {
  std::string kind = "mixed";
  int count = 24;
  int size = 96;
  std::uint64_t seed = 1;
  double noise = 0.02;
  std::string out;
};

struct ExperimentArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
};

struct TwoPassArgs {
  std::string config;
  std::string kind = "two_lobe";
  int count = 24;
  std::uint64_t seed = 1;
  std::size_t n_points = 20;
  bool prior = false;
  std::string backend = "reference";
  std::string out;
};

struct EvaluateArgs {
  std::string pred;
  std::string gt;
};

struct NiftiArgs {
  std::string file;
  std::string image;
};

struct ServeArgs {
  std::string config;
  std::optional<int> port;
  std::string address;
  std::string log_dir;
  bool evaluation = false;
};

struct ReplayArgs {
  std::string log;
  std::string backend = "reference";
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

struct BenchArgs {
  std::size_t history = 10000;
  int capacity = 20;
  int steps = 1000;
  bool sweep = false;
  int jobs = 1;
};

json corpus_spec(const std::string& kind, int count, int size, std::uint64_t seed, double noise) {
  return {{"phantom", {{"kind", kind}, {"count", count}, {"size", size}, {"seed", seed}, {"noise_std", noise}}}};
}

int run_phantom(const PhantomArgs& a, std::ostream& out) {
  const auto corpus = load_corpus(corpus_spec(a.kind, a.count, a.size, a.seed, a.noise));
  write_corpus(corpus, a.out);
  out << json{{"slices", corpus.slices().size()}, {"structures", corpus.instances().size()}, {"out", a.out}}.dump()
      << "\n";
  return 0;
}

int run_experiment(const ExperimentArgs& a, std::ostream& out) {
  const std::filesystem::path path(a.config);
  auto doc = read_json(path);
  if (a.seed) doc["master_seed"] = *a.seed;
  doc["jobs"] = a.jobs;
  auto cfg = experiment_from_json(doc, dir_of(path));
  if (!a.out.empty()) cfg.output_path = a.out;
  const auto t0 = Clock::now();
  const Corpus corpus = load_corpus(cfg.corpus, cfg.base_dir);
  auto backend = make_backend(cfg.backend);
  const auto rows = run_synthetic_experiment(cfg, corpus, *backend);
  const double elapsed = ms_since(t0);
  emit_tables(rows, cfg.output_path, run_manifest(cfg, backend->identity(), elapsed, corpus.instances().size()));
  out << json{{"rows", rows.size()}, {"instances", corpus.instances().size()}, {"elapsed_ms", elapsed},
              {"out", cfg.output_path.string()}}
             .dump()
      << "\n";
  return 0;
}

int run_two_pass_cmd(const TwoPassArgs& a, std::ostream& out) {
  json corpus_cfg = corpus_spec(a.kind, a.count, 96, a.seed, 0.02);
  std::filesystem::path base;
  if (!a.config.empty()) {
    const auto doc = read_json(a.config);
    corpus_cfg = doc.value("corpus", corpus_cfg);
    base = dir_of(a.config);
  }
  const Corpus corpus = load_corpus(corpus_cfg, base);
  auto backend = make_backend(a.backend);
  TwoPassConfig cfg;
  cfg.n_points = a.n_points;
  cfg.send_prior_mask = a.prior;
  cfg.seed = a.seed;
  std::string csv = "case_id,slice_index,structure,base_dice,corrected_dice\n";
  std::vector<double> base_d;
  std::vector<double> corr_d;
  std::size_t improved = 0;
  for (const auto& inst : corpus.instances()) {
    const auto r = run_two_pass(inst, cfg, *backend);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.5f,%.5f", r.base_dice, r.corrected_dice);
    csv += inst.case_id + "," + std::to_string(inst.slice_index) + "," + inst.key + "," + buf + "\n";
    base_d.push_back(r.base_dice);
    corr_d.push_back(r.corrected_dice);
    if (r.corrected_dice > r.base_dice) ++improved;
  }
  if (base_d.empty()) fail(ErrorCode::kCorpusError, "corpus has no structures");
  if (!a.out.empty()) write_text(a.out, csv);
  out << json{{"instances", base_d.size()},
              {"base_mean", aggregate(base_d).mean},
              {"corrected_mean", aggregate(corr_d).mean},
              {"improved", improved}}
             .dump()
      << "\n";
  return 0;
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto d = dice(read_mask(a.pred), read_mask(a.gt));
  out << json{{"dice", d.value}}.dump() << "\n";
  return 0;
}

int run_nifti_info(const NiftiArgs& a, std::ostream& out) {
  const Volume v = a.image.empty() ? read_nifti_file(a.file) : parse_nifti_pair(read_file(a.file), read_file(a.image));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < v.voxel_count(); ++i) {
    lo = std::min(lo, v.value(i));
    hi = std::max(hi, v.value(i));
  }
  out << json{{"dims", v.dims},
              {"pixdim", v.pixdim},
              {"datatype", datatype_name(v.datatype)},
              {"scl_slope", v.scl_slope},
              {"scl_inter", v.scl_inter},
              {"endianness", v.endianness == ByteOrder::kLittle ? "little" : "big"},
              {"min", lo},
              {"max", hi}}
             .dump()
      << "\n";
  return 0;
}

int run_serve(const ServeArgs& a, std::ostream& out) {
  json doc = json::object();
  std::filesystem::path base;
  if (!a.config.empty()) {
    doc = read_json(a.config);
    base = dir_of(a.config);
  }
  auto cfg = server_config_from_json(doc);
  if (a.port) cfg.port = static_cast<unsigned short>(*a.port);
  if (!a.address.empty()) cfg.address = a.address;
  if (!a.log_dir.empty()) cfg.log_dir = a.log_dir;
  if (a.evaluation) cfg.session.evaluation_mode = true;
  auto corpus = std::make_shared<const Corpus>(load_corpus(doc.value("corpus", corpus_spec("mixed", 24, 96, 1, 0.02)), base));
  std::shared_ptr<SegmentationBackend> backend = make_backend(doc.value("backend", json("reference")));
  SessionServer server(cfg, corpus, backend);
  server.listen();
  out << json{{"listening", server.port()}, {"address", cfg.address}, {"backend", backend->identity()}}.dump()
      << std::endl;
  server.run();
  return 0;
}

int run_replay(const ReplayArgs& a, std::ostream& out) {
  const auto bytes = read_file(a.log);
  const auto log = parse_session_log(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  json doc = json::object();
  std::filesystem::path base;
  if (!a.config.empty()) {
    doc = read_json(a.config);
    base = dir_of(a.config);
  }
  auto corpus = std::make_shared<const Corpus>(load_corpus(doc.value("corpus", corpus_spec("mixed", 24, 96, 1, 0.02)), base));
  std::shared_ptr<SegmentationBackend> backend = make_backend(a.backend);
  const auto report = replay_session(log, backend, a.seed, corpus, session_config_from_json(doc.value("session", json())));
  const auto text = report.to_json().dump();
  if (!a.out.empty()) write_text(a.out, text + "\n");
  out << text << "\n";
  return 0;
}

int run_bench(const BenchArgs& a, std::ostream& out) {
  StrategyConfig cfg;
  cfg.capacity = a.capacity;
  cfg.validate();
  StrategyState state(7);
  Rng rng(11);
  for (std::size_t i = 0; i < a.history; ++i) state.history.push_back({{uniform01(rng) * 512, uniform01(rng) * 512}, 0});
  std::vector<Point2> fresh(static_cast<std::size_t>(a.capacity));
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(a.steps));
  for (int s = 0; s < a.steps; ++s) {
    for (auto& p : fresh) p = {uniform01(rng) * 512, uniform01(rng) * 512};
    const auto t0 = Clock::now();
    const auto prompt = next_prompt_accumulate(state, cfg, a.capacity, fresh);
    times.push_back(ms_since(t0));
    if (prompt.live_count() != static_cast<std::size_t>(a.capacity)) fail(ErrorCode::kInvalidParam, "bench prompt size");
    state.history.resize(a.history);  // keep the history size fixed
  }
  std::sort(times.begin(), times.end());
  json report{{"history", a.history},
              {"capacity", a.capacity},
              {"steps", a.steps},
              {"step_ms_median", times[times.size() / 2]},
              {"step_ms_max", times.back()}};
  if (a.sweep) {
    ExperimentConfig ecfg;
    ecfg.grid.proportions = table3_proportions();
    ecfg.jobs = a.jobs;
    const auto t0 = Clock::now();
    const Corpus corpus = make_phantom_corpus({});
    ReferenceBackend backend;
    const auto rows = run_synthetic_experiment(ecfg, corpus, backend);
    report["sweep_rows"] = rows.size();
    report["sweep_ms"] = ms_since(t0);
  }
  out << report.dump() << "\n";
  return 0;
}

void emit_error(std::ostream& err, std::string_view code, std::string_view detail) {
  err << json{{"error", code}, {"detail", detail}}.dump() << "\n";
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaze-driven interactive segmentation toolkit", "gazeseg"};
  app.require_subcommand(1);
  app.fallthrough(false);

  PhantomArgs phantom;
  auto* c_phantom = app.add_subcommand("phantom", "Render a synthetic phantom corpus (PNG + RLE sidecars)");
  c_phantom->add_option("--kind", phantom.kind, "Corpus kind")->check(CLI::IsMember({"mixed", "two_lobe"}))->capture_default_str();
  c_phantom->add_option("--count", phantom.count, "Number of cases")->check(CLI::PositiveNumber)->capture_default_str();
  c_phantom->add_option("--size", phantom.size, "Image side in pixels")->check(CLI::Range(32, 4096))->capture_default_str();
  c_phantom->add_option("--seed", phantom.seed, "Generator seed")->capture_default_str();
  c_phantom->add_option("--noise", phantom.noise, "Gaussian noise std")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_phantom->add_option("--out", phantom.out, "Output directory")->required();

  ExperimentArgs exp;
  auto* c_exp = app.add_subcommand("experiment", "Run a synthetic gaze sweep and write result tables");
  c_exp->add_option("--config", exp.config, "Experiment JSON document")->required()->check(CLI::ExistingFile);
  c_exp->add_option("--seed", exp.seed, "Override master_seed");
  c_exp->add_option("--jobs", exp.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  c_exp->add_option("--out", exp.out, "Output directory (overrides output_path)");

  TwoPassArgs tp;
  auto* c_tp = app.add_subcommand("two-pass", "Base prediction then mask-correction prediction per structure");
  c_tp->add_option("--config", tp.config, "JSON document with a \"corpus\" entry")->check(CLI::ExistingFile);
  c_tp->add_option("--kind", tp.kind, "Phantom corpus kind when no config is given")
      ->check(CLI::IsMember({"mixed", "two_lobe"}))
      ->capture_default_str();
  c_tp->add_option("--count", tp.count, "Phantom cases when no config is given")->check(CLI::PositiveNumber)->capture_default_str();
  c_tp->add_option("--seed", tp.seed, "Seed")->capture_default_str();
  c_tp->add_option("--n-points", tp.n_points, "Points per pass")->check(CLI::Range(1, 50))->capture_default_str();
  c_tp->add_flag("--prior", tp.prior, "Send the base mask as a prior in pass 2");
  c_tp->add_option("--backend", tp.backend, "reference, reference:<tau> or an http URL")->capture_default_str();
  c_tp->add_option("--out", tp.out, "Per-structure CSV path");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Dice between two masks (RLE JSON or PNG)");
  c_ev->add_option("--pred", ev.pred, "Predicted mask")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--gt", ev.gt, "Reference mask")->required()->check(CLI::ExistingFile);

  NiftiArgs ni;
  auto* c_ni = app.add_subcommand("nifti-info", "Print NIfTI-1 dims, pixdim and datatype");
  c_ni->add_option("file", ni.file, "Volume (.nii, .nii.gz) or pair header (.hdr)")->required()->check(CLI::ExistingFile);
  c_ni->add_option("--image", ni.image, "Pair image file (.img)")->check(CLI::ExistingFile);

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Serve /v1/session, /v1/segment and /v1/health");
  c_sv->add_option("--config", sv.config, "Server JSON document")->check(CLI::ExistingFile);
  c_sv->add_option("--port", sv.port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  c_sv->add_option("--address", sv.address, "Bind address");
  c_sv->add_option("--log-dir", sv.log_dir, "Directory for session logs");
  c_sv->add_flag("--evaluation", sv.evaluation, "Stream dice to clients");

  ReplayArgs rp;
  auto* c_rp = app.add_subcommand("replay", "Re-execute a session log and report timings");
  c_rp->add_option("--log", rp.log, "Session log (line-delimited JSON)")->required()->check(CLI::ExistingFile);
  c_rp->add_option("--backend", rp.backend, "reference, reference:<tau> or an http URL")->capture_default_str();
  c_rp->add_option("--seed", rp.seed, "Session seed used when recording")->capture_default_str();
  c_rp->add_option("--config", rp.config, "Server JSON document naming the corpus")->check(CLI::ExistingFile);
  c_rp->add_option("--out", rp.out, "Write the report here as well");

  BenchArgs bn;
  auto* c_bn = app.add_subcommand("bench", "Time a strategy step and optionally the full sweep");
  c_bn->add_option("--history", bn.history, "History size")->capture_default_str();
  c_bn->add_option("--capacity", bn.capacity, "Prompt capacity")->check(CLI::Range(1, 50))->capture_default_str();
  c_bn->add_option("--steps", bn.steps, "Timed steps")->check(CLI::PositiveNumber)->capture_default_str();
  c_bn->add_flag("--sweep", bn.sweep, "Also time the 20-row sweep on the phantom corpus");
  c_bn->add_option("--jobs", bn.jobs, "Worker threads for the sweep")->check(CLI::PositiveNumber)->capture_default_str();

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (c_phantom->parsed()) return run_phantom(phantom, out);
    if (c_exp->parsed()) return run_experiment(exp, out);
    if (c_tp->parsed()) return run_two_pass_cmd(tp, out);
    if (c_ev->parsed()) return run_evaluate(ev, out);
    if (c_ni->parsed()) return run_nifti_info(ni, out);
    if (c_sv->parsed()) return run_serve(sv, out);
    if (c_rp->parsed()) return run_replay(rp, out);
    if (c_bn->parsed()) return run_bench(bn, out);
  } catch (const Error& e) {
    emit_error(err, to_string(e.code()), e.detail());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    emit_error(err, to_string(ErrorCode::kIoError), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error(err, "InternalError", e.what());
    return 1;
  }
  return 2;
}

}  // namespace gazeseg
