#pragma once

// Include after any Eigen-bearing header: resolv.h defines a `_res` macro.
#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include "httplib.h"

// Local JSON endpoint whose reply is computed per request.
class MockServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit MockServer(Handler h, std::string path = "/report") : path_(std::move(path)) {
    srv_.Post(path_, [this, h](const httplib::Request& rq, httplib::Response& rs) {
      ++hits;
      last_auth = rq.get_header_value("Authorization");
      h(rq, rs);
    });
    port_ = srv_.bind_to_any_port("127.0.0.1");
    th_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~MockServer() {
    srv_.stop();
    th_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + path_; }
  std::atomic<int> hits{0};
  std::string last_auth;

 private:
  httplib::Server srv_;
  std::string path_;
  int port_ = 0;
  std::thread th_;
};
