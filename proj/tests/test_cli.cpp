#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gazeseg/cli.hpp"
#include "gazeseg/data_io.hpp"
#include "gazeseg/rle.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gazeseg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "gazeseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("gazeseg_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_experiment(const fs::path& path) {
  std::ofstream(path) << json{{"corpus", {{"phantom", {{"count", 3}, {"size", 64}, {"seed", 2}}}}},
                              {"grid", {{"proportions", {{{"gt", 80}, {"out", 20}, {"diff", 0}},
                                                         {{"gt", 20}, {"out", 10}, {"diff", 70}}}},
                                        {"n_points", {20}}}},
                              {"iterations", 2},
                              {"master_seed", 3}}
                             .dump();
}

}  // namespace

TEST_CASE("exit codes") {
  const auto none = run({});
  CHECK(none.code == 2);
  CHECK(none.err.find("Subcommands:") != std::string::npos);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"phantom"}).code == 2);
  CHECK(run({"bench", "--capacity", "51"}).code == 2);

  const auto dir = scratch("exit");
  auto bytes = oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false).magic("xyz1").build_int16(
      std::vector<std::int16_t>(32, 1));
  write_file(dir / "bad.nii", bytes);
  const auto bad = run({"nifti-info", (dir / "bad.nii").string()});
  CHECK(bad.code == 1);
  const auto err = json::parse(bad.err);
  CHECK(err["error"] == "BadMagic");
  fs::remove_all(dir);
}

TEST_CASE("help text is stable") {
  const auto expected = read_text(std::string(GAZESEG_FIXTURES) + "/cli_help.txt");
  CHECK(run({"--help"}).out == expected);
}

TEST_CASE("every subcommand documents its flags") {
  const std::map<std::string, std::vector<std::string>> flags{
      {"phantom", {"--kind", "--count", "--size", "--seed", "--noise", "--out"}},
      {"experiment", {"--config", "--seed", "--jobs", "--out"}},
      {"two-pass", {"--config", "--kind", "--count", "--seed", "--n-points", "--prior", "--backend", "--out"}},
      {"evaluate", {"--pred", "--gt"}},
      {"nifti-info", {"file", "--image"}},
      {"serve", {"--config", "--port", "--address", "--log-dir", "--evaluation"}},
      {"replay", {"--log", "--backend", "--seed", "--config", "--out"}},
      {"bench", {"--history", "--capacity", "--steps", "--sweep", "--jobs"}},
  };
  const auto top = run({"--help"}).out;
  for (const auto& [sub, names] : flags) {
    CHECK(top.find(sub) != std::string::npos);
    const auto help = run({sub, "--help"});
    CHECK(help.code == 0);
    for (const auto& f : names) CHECK_MESSAGE(help.out.find(f) != std::string::npos, sub << " " << f);
  }
}

TEST_CASE("phantom and evaluate") {
  const auto dir = scratch("phantom");
  const auto r = run({"phantom", "--count", "2", "--size", "48", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["slices"] == 2);
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") sidecars.push_back(e.path());
  REQUIRE_FALSE(sidecars.empty());
  const auto same = run({"evaluate", "--pred", sidecars[0].string(), "--gt", sidecars[0].string()});
  CHECK(same.code == 0);
  CHECK(json::parse(same.out)["dice"] == 1.0);

  Mask a(2, 3), b(2, 3);
  a.set(0, 0);
  a.set(0, 1);
  b.set(0, 1);
  std::ofstream(dir / "a.rle") << rle_to_json(a).dump();
  std::ofstream(dir / "b.rle") << rle_to_json(b).dump();
  const auto partial = run({"evaluate", "--pred", (dir / "a.rle").string(), "--gt", (dir / "b.rle").string()});
  CHECK(json::parse(partial.out)["dice"] == doctest::Approx(2.0 / 3.0));
  std::ofstream(dir / "c.rle") << rle_to_json(Mask(3, 3)).dump();
  CHECK(json::parse(run({"evaluate", "--pred", (dir / "a.rle").string(), "--gt", (dir / "c.rle").string()}).err)["error"] ==
        "ShapeMismatch");
  fs::remove_all(dir);
}

TEST_CASE("nifti-info") {
  const auto dir = scratch("nifti");
  Volume v;
  v.dims = {3, 4, 2};
  v.voxels.assign(24, 0.0);
  v.voxels[5] = 250;
  write_file(dir / "v.nii.gz", write_nifti(v, ByteOrder::kBig, true));
  const auto r = run({"nifti-info", (dir / "v.nii.gz").string()});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["dims"] == json::array({3, 4, 2}));
  CHECK(j["max"] == 250.0);
  CHECK(j["endianness"] == "big");
  fs::remove_all(dir);
}

TEST_CASE("experiment is byte-reproducible") {
  const auto dir = scratch("experiment");
  write_experiment(dir / "exp.json");
  const auto a = run({"experiment", "--config", (dir / "exp.json").string(), "--out", (dir / "a").string()});
  REQUIRE(a.code == 0);
  const auto b = run({"experiment", "--config", (dir / "exp.json").string(), "--out", (dir / "b").string(), "--jobs", "3"});
  REQUIRE(b.code == 0);
  CHECK(read_text(dir / "a" / "results.csv") == read_text(dir / "b" / "results.csv"));
  CHECK(read_text(dir / "a" / "per_case.csv") == read_text(dir / "b" / "per_case.csv"));
  const auto c = run({"experiment", "--config", (dir / "exp.json").string(), "--out", (dir / "c").string(), "--seed", "4"});
  REQUIRE(c.code == 0);
  CHECK(read_text(dir / "a" / "per_case.csv") != read_text(dir / "c" / "per_case.csv"));
  const auto manifest = json::parse(read_text(dir / "c" / "manifest.json"));
  CHECK(manifest["master_seed"] == 4);

  std::ofstream(dir / "broken.json") << "{\"iterations\": 0}";
  const auto bad = run({"experiment", "--config", (dir / "broken.json").string()});
  CHECK(bad.code == 1);
  CHECK(json::parse(bad.err)["error"] == "InvalidParam");
  fs::remove_all(dir);
}

TEST_CASE("two-pass and bench") {
  const auto dir = scratch("twopass");
  const auto r = run({"two-pass", "--count", "3", "--n-points", "1", "--prior", "--out", (dir / "tp.csv").string()});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["instances"] == 3);
  CHECK(fs::exists(dir / "tp.csv"));
  const auto bench = run({"bench", "--history", "500", "--steps", "10"});
  REQUIRE(bench.code == 0);
  CHECK(json::parse(bench.out).contains("step_ms_median"));
  fs::remove_all(dir);
}

TEST_CASE("the installed binary behaves like dispatch") {
  const auto dir = scratch("binary");
  write_experiment(dir / "exp.json");
  const std::string cli = GAZESEG_CLI;
  for (const char* sub : {"a", "b"}) {
    const std::string cmd = "\"" + cli + "\" experiment --config \"" + (dir / "exp.json").string() + "\" --out \"" +
                            (dir / sub).string() + "\" > \"" + (dir / (std::string(sub) + ".log")).string() + "\"";
    REQUIRE(std::system(cmd.c_str()) == 0);
  }
  CHECK(read_text(dir / "a" / "results.csv") == read_text(dir / "b" / "results.csv"));
  CHECK(std::system(("\"" + cli + "\" > /dev/null 2>&1").c_str()) != 0);
  fs::remove_all(dir);
}
