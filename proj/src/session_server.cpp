#include "gazeseg/session_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <thread>

#include "gazeseg/error.hpp"

namespace gazeseg {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

ServerConfig server_config_from_json(const json& j) {
  ServerConfig cfg;
  if (j.is_null()) return cfg;
  try {
    cfg.address = j.value("address", cfg.address);
    cfg.port = j.value("port", cfg.port);
    if (j.contains("session")) cfg.session = session_config_from_json(j["session"]);
    if (j.contains("log_dir")) cfg.log_dir = j["log_dir"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidParam, std::string("bad server config: ") + e.what());
  }
  return cfg;
}

namespace {

struct Shared {
  ServerConfig config;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<SegmentationBackend> backend;
  std::atomic<int> next_session{0};
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<Shared> shared)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), shared_(std::move(shared)) {}

  void start(http::request<http::string_body> req) {
    const auto begin = std::chrono::steady_clock::now();
    session_ = std::make_unique<Session>(
        shared_->config.session, shared_->corpus, shared_->backend, [begin] {
          return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - begin).count();
        });
    if (!shared_->config.log_dir.empty()) {
      std::filesystem::create_directories(shared_->config.log_dir);
      const int n = shared_->next_session++;
      log_.open(shared_->config.log_dir / ("session-" + std::to_string(n) + ".jsonl"));
      for (const auto& e : session_->log()) log_ << format_event_line(e) << '\n';
      log_.flush();
      session_->set_sink([this](const SessionEvent& e) {
        log_ << format_event_line(e) << '\n';
        log_.flush();
      });
    }
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->read();
      self->arm_timer();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->timer_.cancel();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      for (auto& m : self->session_->handle_text(text)) self->send(m.dump());
      self->read();
    });
  }

  void arm_timer() {
    timer_.expires_after(std::chrono::microseconds(
        static_cast<long long>(shared_->config.session.cadence_ms * 1000.0)));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      for (auto& m : self->session_->recompute_tick()) self->send(m.dump());
      self->arm_timer();
    });
  }

  void send(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write_next();
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  websocket::stream<tcp::socket> ws_;
  asio::steady_timer timer_;
  std::shared_ptr<Shared> shared_;
  std::unique_ptr<Session> session_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::ofstream log_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<Shared> shared)
      : socket_(std::move(socket)), shared_(std::move(shared)) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    http::async_read(socket_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->handle();
    });
  }

  void handle() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/v1/session") {
        std::make_shared<WsSession>(std::move(socket_), shared_)->start(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::content_type, "application/json");
    const auto target = req_.target();
    if (target == "/v1/segment" && req_.method() == http::verb::post) {
      auto corpus = shared_->corpus;
      const auto [status, body] = serve_segment(
          *shared_->backend, req_.body(),
          [corpus](const std::string& case_id, int slice) -> std::shared_ptr<const ImageSlice> {
            const CaseSlice* s = corpus ? corpus->find(case_id, slice) : nullptr;
            return s ? s->image : nullptr;
          });
      res->result(static_cast<http::status>(status));
      res->body() = body;
    } else if (target == "/v1/health" && req_.method() == http::verb::get) {
      res->result(http::status::ok);
      res->body() = json{{"status", "ok"}, {"backend", shared_->backend->identity()}}.dump();
    } else {
      res->result(http::status::not_found);
      res->body() = error_body("not_found", std::string(target)).dump();
    }
    res->prepare_payload();
    http::async_write(socket_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->socket_.shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  tcp::socket socket_;
  std::shared_ptr<Shared> shared_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct SessionServer::Impl {
  asio::io_context io{1};
  tcp::acceptor acceptor{io};
  std::shared_ptr<Shared> shared = std::make_shared<Shared>();
  std::thread thread;
  bool listening = false;

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), shared)->start();
      accept();
    });
  }
};

SessionServer::SessionServer(ServerConfig config, std::shared_ptr<const Corpus> corpus,
                             std::shared_ptr<SegmentationBackend> backend)
    : impl_(std::make_unique<Impl>()) {
  impl_->shared->config = std::move(config);
  impl_->shared->corpus = std::move(corpus);
  impl_->shared->backend = std::move(backend);
}

SessionServer::~SessionServer() {
  stop();
}

void SessionServer::listen() {
  if (impl_->listening) return;
  try {
    const auto& cfg = impl_->shared->config;
    const tcp::endpoint ep{asio::ip::make_address(cfg.address), cfg.port};
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
  } catch (const boost::system::system_error& e) {
    fail(ErrorCode::kIoError, std::string("cannot listen: ") + e.what());
  }
  impl_->listening = true;
  impl_->accept();
}

unsigned short SessionServer::port() const {
  return impl_->listening ? impl_->acceptor.local_endpoint().port() : impl_->shared->config.port;
}

void SessionServer::run() {
  listen();
  impl_->io.run();
}

void SessionServer::start() {
  listen();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void SessionServer::stop() {
  impl_->io.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace gazeseg
