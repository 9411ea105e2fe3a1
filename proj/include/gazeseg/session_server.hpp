#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "gazeseg/data_io.hpp"
#include "gazeseg/seg_backend.hpp"
#include "gazeseg/session.hpp"

namespace gazeseg {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  SessionConfig session;
  std::filesystem::path log_dir;  // one <n>.jsonl per connection; empty disables
};

// {"address","port","session":{...},"log_dir"}; corpus and backend keys are
// read by the caller.
ServerConfig server_config_from_json(const nlohmann::json& j);

// Websocket /v1/session, POST /v1/segment, GET /v1/health on one listener.
// All sessions share a single I/O thread, which serializes each session's
// messages and recompute ticks.
class SessionServer {
 public:
  SessionServer(ServerConfig config, std::shared_ptr<const Corpus> corpus,
                std::shared_ptr<SegmentationBackend> backend);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  // Binds the listener; throws IoError when the address is unavailable.
  void listen();
  unsigned short port() const;
  // Serves until stop(); listen() is called first if needed.
  void run();
  // run() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gazeseg
