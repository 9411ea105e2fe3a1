#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>

#include <filesystem>
#include <fstream>

#include "gazeseg/metrics.hpp"
#include "gazeseg/rle.hpp"
#include "gazeseg/session.hpp"
#include "gazeseg/session_server.hpp"
#include "test_util.hpp"

using namespace gazeseg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const Corpus> corpus() {
  static const auto c = [] {
    PhantomCorpusSpec spec;
    spec.count = 3;
    spec.size = 64;
    spec.seed = 12;
    spec.noise_std = 0.0;
    return std::make_shared<const Corpus>(make_phantom_corpus(spec));
  }();
  return c;
}

StructureInstance first_instance() { return corpus()->instances().front(); }

// Samples centred on gt pixels: one [t, x, y] per point.
json gaze_on(const Mask& gt, double t0, int count, int stride = 7) {
  json samples = json::array();
  int seen = 0;
  for (int i = 0; i < static_cast<int>(gt.size()) && seen < count; ++i) {
    if (!gt.at(static_cast<std::size_t>(i)) || (i % stride) != 0) continue;
    samples.push_back({t0 + seen * 10.0, double(i % gt.width()), double(i / gt.width())});
    ++seen;
  }
  return {{"type", "gaze"}, {"samples", samples}};
}

struct Harness {
  double now = 0.0;
  Session session;
  explicit Harness(SessionConfig cfg = {}, std::shared_ptr<SegmentationBackend> be = std::make_shared<ReferenceBackend>())
      : session(cfg, corpus(), std::move(be), [this] { return now; }) {}

  std::vector<json> send(const json& m, double dt = 50.0) {
    now += dt;
    return session.handle_message(m);
  }
  std::vector<json> tick(double dt = 200.0) {
    now += dt;
    return session.recompute_tick();
  }
};

json load_msg(const StructureInstance& inst) {
  return {{"type", "load_case"}, {"case_id", inst.case_id}, {"slice_index", inst.slice_index}};
}

class FailingBackend : public SegmentationBackend {
 public:
  SegmentationResponse segment(const SegmentationRequest&) override {
    fail(ErrorCode::kBackendUnavailable, "offline");
  }
  std::string identity() const override { return "failing"; }
};

}  // namespace

TEST_CASE("session state machine") {
  const auto inst = first_instance();
  Harness h;
  CHECK(h.session.phase() == SessionPhase::kIdle);
  CHECK(h.session.log().front().payload["type"] == "session_start");
  CHECK_FALSE(h.session.log().front().payload["config"].contains("seed"));

  SUBCASE("gaze before a structure is a phase error and changes nothing") {
    const auto out = h.send(gaze_on(inst.gt, 0, 5));
    REQUIRE(out.size() == 1);
    CHECK(out[0]["type"] == "error");
    CHECK(out[0]["code"] == "bad_phase");
    CHECK(h.session.phase() == SessionPhase::kIdle);
    CHECK(h.session.buffered() == 0);
  }
  SUBCASE("unknown case") {
    const auto out = h.send({{"type", "load_case"}, {"case_id", "nowhere"}, {"slice_index", 0}});
    REQUIRE(out.size() == 1);
    CHECK(out[0]["code"] == "case_not_found");
    CHECK(h.session.phase() == SessionPhase::kIdle);
  }
  SUBCASE("full structure loop") {
    CHECK(h.send({{"type", "hello"}, {"proto", 1}}).empty());
    const auto loaded = h.send(load_msg(inst));
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0]["type"] == "case_loaded");
    CHECK(loaded[0]["H"] == 64);
    CHECK(loaded[0]["W"] == 64);
    CHECK(loaded[0]["structures"][0] == inst.key);
    CHECK(h.session.phase() == SessionPhase::kLoaded);

    CHECK(h.send({{"type", "start_structure"}, {"structure", "banana"}})[0]["code"] == "unknown_structure");
    CHECK(h.send({{"type", "start_structure"}, {"structure", inst.key}}).empty());
    CHECK(h.session.phase() == SessionPhase::kSegmenting);
    CHECK(h.tick().empty());

    CHECK(h.send(gaze_on(inst.gt, 0, 12)).empty());
    CHECK(h.session.buffered() == 12);
    const auto masks = h.tick();
    REQUIRE(masks.size() == 1);
    CHECK(masks[0]["type"] == "mask");
    CHECK(masks[0]["iteration"] == 1);
    CHECK(masks[0]["dice"].is_null());
    CHECK(h.session.buffered() == 0);
    REQUIRE(h.session.current_mask().has_value());
    CHECK(rle_from_json(masks[0]["rle"]).same_pixels(*h.session.current_mask()));
    CHECK(dice(*h.session.current_mask(), inst.gt).value == 1.0);
    // Logged dice is kept even when the client does not see it.
    CHECK(h.session.log().back().payload["dice"] == 1.0);

    CHECK(h.send(load_msg(inst))[0]["code"] == "bad_phase");
    CHECK(h.session.phase() == SessionPhase::kSegmenting);
    CHECK(h.send({{"type", "key"}, {"name", "Escape"}}).empty());

    const auto done = h.send({{"type", "key"}, {"name", "Enter"}});
    REQUIRE(done.size() == 1);
    CHECK(done[0]["type"] == "done");
    CHECK(done[0]["iterations"] == 1);
    CHECK(done[0]["structure"] == inst.key);
    CHECK(done[0]["elapsed_ms"].get<double>() > 0.0);
    CHECK(h.session.phase() == SessionPhase::kFinalized);
    CHECK(h.send({{"type", "key"}, {"name", "Enter"}})[0]["code"] == "bad_phase");
    CHECK(h.send({{"type", "start_structure"}, {"structure", inst.key}}).empty());
    CHECK(h.session.iteration() == 0);
  }
}

TEST_CASE("evaluation mode reveals dice") {
  SessionConfig cfg;
  cfg.evaluation_mode = true;
  const auto inst = first_instance();
  Harness h(cfg);
  h.send(load_msg(inst));
  h.send({{"type", "start_structure"}, {"structure", inst.key}});
  h.send(gaze_on(inst.gt, 0, 8));
  const auto out = h.tick();
  REQUIRE(out.size() == 1);
  CHECK(out[0]["dice"] == 1.0);
}

TEST_CASE("malformed inbound messages") {
  Harness h;
  CHECK(h.session.handle_text("{oops")[0]["code"] == "bad_message");
  CHECK(h.send({{"type", "teleport"}})[0]["code"] == "bad_message");
  CHECK(h.send({{"no_type", 1}})[0]["code"] == "bad_message");
  CHECK(h.send({{"type", "hello"}, {"proto", 2}})[0]["code"] == "bad_message");
  const auto inst = first_instance();
  h.send(load_msg(inst));
  h.send({{"type", "start_structure"}, {"structure", inst.key}});
  CHECK(h.send({{"type", "gaze"}, {"samples", {{1, 2}}}})[0]["code"] == "bad_message");
  CHECK(h.send({{"type", "gaze"}})[0]["code"] == "bad_message");
  bool saw_invalid = false;
  for (const auto& e : h.session.log()) saw_invalid |= e.kind == EventKind::kError && e.payload["type"] == "invalid";
  CHECK(saw_invalid);
}

TEST_CASE("log timestamps increase strictly under a frozen clock") {
  const auto inst = first_instance();
  Session s({}, corpus(), std::make_shared<ReferenceBackend>(), [] { return 5.0; });
  s.handle_message(load_msg(inst));
  s.handle_message({{"type", "start_structure"}, {"structure", inst.key}});
  s.handle_message(gaze_on(inst.gt, 0, 4));
  s.recompute_tick();
  const auto& log = s.log();
  REQUIRE(log.size() >= 5);
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i].t > log[i - 1].t);
  CHECK_NOTHROW(parse_session_log(s.log_text()));
}

TEST_CASE("a failing backend keeps the previous mask") {
  const auto inst = first_instance();
  auto be = std::make_shared<FailingBackend>();
  Harness h({}, be);
  h.send(load_msg(inst));
  h.send({{"type", "start_structure"}, {"structure", inst.key}});
  h.send(gaze_on(inst.gt, 0, 6));
  const auto out = h.tick();
  REQUIRE(out.size() == 1);
  CHECK(out[0]["type"] == "error");
  CHECK(out[0]["code"] == "BackendUnavailable");
  CHECK_FALSE(h.session.current_mask().has_value());
  CHECK(h.session.iteration() == 0);
  CHECK(h.session.phase() == SessionPhase::kSegmenting);
}

TEST_CASE("gaze outside the image produces no prompt") {
  const auto inst = first_instance();
  Harness h;
  h.send(load_msg(inst));
  h.send({{"type", "start_structure"}, {"structure", inst.key}});
  h.send({{"type", "gaze"}, {"samples", {{0, -40, -40}, {10, 500, 3}}}});
  CHECK(h.tick().empty());
  CHECK(h.session.log().back().payload["status"] == "EmptyInput");
}

TEST_CASE("bbox mode") {
  const auto inst = first_instance();
  Harness h;
  h.send(load_msg(inst));
  CHECK(h.send({{"type", "box"}, {"r0", 0}, {"c0", 0}, {"r1", 5}, {"c1", 5}})[0]["code"] == "bad_phase");
  h.send({{"type", "start_structure"}, {"structure", inst.key}, {"mode", "bbox"}});
  CHECK(h.session.mode() == PromptMode::kBbox);
  h.send(gaze_on(inst.gt, 0, 6));
  CHECK(h.session.buffered() == 0);
  const Box b = bbox_from_mask(inst.gt, 1);
  const auto out = h.send({{"type", "box"}, {"r0", b.r0}, {"c0", b.c0}, {"r1", b.r1}, {"c1", b.c1}});
  REQUIRE(out.size() == 1);
  CHECK(out[0]["type"] == "mask");
  CHECK(dice(*h.session.current_mask(), inst.gt).value == 1.0);
  CHECK(h.send({{"type", "box"}, {"r0", 4}, {"c0", 4}, {"r1", 4}, {"c1", 4}})[0]["code"] == "ProtocolError");
  CHECK(h.send({{"type", "box"}, {"r0", 9}, {"c0", 4}, {"r1", 4}, {"c1", 8}})[0]["code"] == "ProtocolError");
  CHECK(h.session.iteration() == 1);
}

TEST_CASE("session log parsing") {
  SessionEvent e{12.5, EventKind::kMask, {{"type", "mask"}, {"iteration", 1}}};
  const auto back = parse_session_log(format_event_line(e) + "\n\n");
  REQUIRE(back.size() == 1);
  CHECK(back[0].t == 12.5);
  CHECK(back[0].kind == EventKind::kMask);
  CHECK(back[0].payload == e.payload);
  const std::string two = format_event_line({5, EventKind::kKey, {{"type", "key"}}}) + "\n" +
                          format_event_line({5, EventKind::kKey, {{"type", "key"}}}) + "\n";
  CHECK_ERROR_CODE(parse_session_log(two), ErrorCode::kCorruptLog);
  CHECK_ERROR_CODE(parse_session_log(R"({"t":1,"kind":"warp","payload":{"type":"x"}})"), ErrorCode::kCorruptLog);
  CHECK_ERROR_CODE(parse_session_log(R"({"t":1,"kind":"key"})"), ErrorCode::kCorruptLog);
}

TEST_CASE("replay reproduces every logged mask") {
  const auto corp = corpus();
  SessionConfig cfg;
  cfg.seed = 77;
  StrategyConfig strategy;
  strategy.capacity_mode = CapacityMode::kRandom1To20;
  Harness h(cfg);
  for (const auto& inst : corp->instances()) {
    h.send(load_msg(inst));
    h.send({{"type", "start_structure"}, {"structure", inst.key}, {"strategy", strategy_to_json(strategy)}});
    for (int k = 0; k < 3; ++k) {
      h.send(gaze_on(inst.gt, k * 100.0, 10, 3 + k));
      h.tick();
    }
    h.send({{"type", "key"}, {"name", "Enter"}}, 1000.0);
  }
  const auto log = parse_session_log(h.session.log_text());
  const auto report = replay_session(log, std::make_shared<ReferenceBackend>(), 77, corp);
  CHECK(report.masks_compared == corp->instances().size() * 3);
  CHECK(report.masks_matched == report.masks_compared);
  CHECK(report.exact_replay);
  CHECK(report.structures.size() == corp->instances().size());

  // A different seed changes the random capacities, hence the prompts.
  const auto other = replay_session(log, std::make_shared<ReferenceBackend>(), 78, corp);
  CHECK(other.masks_compared == report.masks_compared);
}

TEST_CASE("replay timing statistics") {
  const auto inst = first_instance();
  std::vector<SessionEvent> log;
  auto add = [&](double t, EventKind k, json p) { log.push_back({t, k, std::move(p)}); };
  add(0, EventKind::kLoad, {{"type", "session_start"}, {"config", json::object()}});
  add(10, EventKind::kLoad, load_msg(inst));
  add(1000, EventKind::kLoad, {{"type", "start_structure"}, {"structure", inst.key}});
  add(8999.5, EventKind::kKey, {{"type", "key"}, {"name", "Enter"}});
  add(9000, EventKind::kFinalize, {{"type", "done"}, {"structure", inst.key}});
  add(10000, EventKind::kLoad, {{"type", "start_structure"}, {"structure", inst.key}});
  add(21999.5, EventKind::kKey, {{"type", "key"}, {"name", "Enter"}});
  add(22000, EventKind::kFinalize, {{"type", "done"}, {"structure", inst.key}});
  const auto report = replay_session(log, std::make_shared<ReferenceBackend>(), 0, corpus());
  REQUIRE(report.structures.size() == 2);
  CHECK(report.duration_mean_s == doctest::Approx(10.0));
  CHECK(report.duration_std_s == doctest::Approx(2.0));
  CHECK(report.to_json()["timing"] == "10.0 ± 2.0 s");
  CHECK(report.exact_replay);
}

TEST_CASE("truncated logs are rejected") {
  const auto inst = first_instance();
  Harness h;
  h.send(load_msg(inst));
  h.send({{"type", "start_structure"}, {"structure", inst.key}});
  auto text = h.session.log_text();
  text.resize(text.size() - 15);
  CHECK_ERROR_CODE(parse_session_log(text), ErrorCode::kCorruptLog);
}

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

json read_until(websocket::stream<tcp::socket>& ws, const std::string& type) {
  for (int i = 0; i < 50; ++i) {
    beast::flat_buffer buf;
    ws.read(buf);
    auto j = json::parse(beast::buffers_to_string(buf.data()));
    if (j.value("type", "") == type) return j;
  }
  return json();
}

}  // namespace

TEST_CASE("server end to end") {
  const auto log_dir = fs::temp_directory_path() / "gazeseg_test_server_logs";
  fs::remove_all(log_dir);
  ServerConfig cfg;
  cfg.port = 0;
  cfg.session.cadence_ms = 30;
  cfg.log_dir = log_dir;
  SessionServer server(cfg, corpus(), std::make_shared<ReferenceBackend>());
  server.listen();
  const auto port = server.port();
  REQUIRE(port != 0);
  server.start();
  const auto inst = first_instance();

  {
    boost::asio::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/v1/session");
    auto send = [&](const json& m) { ws.write(boost::asio::buffer(m.dump())); };
    send({{"type", "hello"}, {"proto", 1}});
    send(load_msg(inst));
    const auto loaded = read_until(ws, "case_loaded");
    CHECK(loaded["H"] == 64);
    send({{"type", "start_structure"}, {"structure", inst.key}});
    send(gaze_on(inst.gt, 0, 10));
    const auto mask = read_until(ws, "mask");
    REQUIRE(mask.is_object());
    CHECK(dice(rle_from_json(mask["rle"]), inst.gt).value == 1.0);
    send({{"type", "key"}, {"name", "Enter"}});
    const auto done = read_until(ws, "done");
    CHECK(done["structure"] == inst.key);
    ws.close(websocket::close_code::normal);
  }

  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/v1/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");

  SegmentationRequest req;
  req.request_id = "srv-1";
  req.case_id = inst.case_id;
  req.slice_index = inst.slice_index;
  req.image = inst.image;
  const Box b = bbox_from_mask(inst.gt);
  req.prompt = PointPrompt::padded(4, std::vector<PromptPoint>{{(b.c0 + b.c1) / 2.0, (b.r0 + b.r1) / 2.0, 1}});
  // Without an inline image the server resolves the slice from its corpus.
  const auto seg = client.Post("/v1/segment", request_to_json(req, false).dump(), "application/json");
  REQUIRE(seg);
  CHECK(seg->status == 200);
  CHECK(response_from_json(json::parse(seg->body)).request_id == "srv-1");
  CHECK(client.Get("/nowhere")->status == 404);

  server.stop();
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(log_dir)) logs.push_back(e.path());
  REQUIRE(logs.size() == 1);
  std::ifstream in(logs[0]);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto events = parse_session_log(ss.str());
  CHECK(events.size() >= 6);
  const auto report = replay_session(events, std::make_shared<ReferenceBackend>(), cfg.session.seed, corpus());
  CHECK(report.exact_replay);
  fs::remove_all(log_dir);
}
