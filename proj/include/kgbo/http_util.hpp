#pragma once

#include <functional>
#include <string>

#include "json.hpp"

namespace kgbo {

using json = nlohmann::json;

// Raw request/response records from remote providers, appended to the
// campaign audit log so runs can be replayed.
using AuditSink = std::function<void(const json&)>;

struct HttpEndpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // request path, "/" when absent
};

HttpEndpoint parse_endpoint(const std::string& url);

struct HttpResult {
  int status = 0;
  std::string body;
};

// POST a JSON body. Transport failures throw ProviderError; HTTP error codes
// are returned to the caller.
HttpResult post_json(const HttpEndpoint& endpoint, const std::string& body, const std::string& bearer_token,
                     double timeout_seconds);

std::string sha256_hex(const std::string& data);

}  // namespace kgbo
