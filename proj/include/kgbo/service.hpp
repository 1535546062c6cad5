#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>

#include "json.hpp"

namespace kgbo {

using json = nlohmann::json;

inline constexpr const char* kApiVersion = "1";

struct ServiceOptions {
  std::string data_dir = "campaigns";
  std::string token;  // shared bearer token; empty disables the check
  std::string cors_origin = "*";
  // Test hook: pause inside every observation ingest after the state copy is
  // mutated and before it is published.
  std::chrono::milliseconds ingest_delay{0};
};

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct HttpReply {
  int status = 200;
  json body;
};

// Campaign service. handle() is the whole API and is safe to call from many
// threads; bind()/serve() put it behind an HTTP listener.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  HttpReply handle(const HttpRequest& request);

  // Port 0 picks a free port. Returns the bound port or throws.
  int bind(const std::string& host, int port);
  void serve();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kgbo
