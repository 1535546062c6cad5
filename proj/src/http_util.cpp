#include "kgbo/http_util.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "httplib.h"
#include "kgbo/error.hpp"

namespace kgbo {

HttpEndpoint parse_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw SchemaError("endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  HttpEndpoint ep;
  ep.base = url.substr(0, slash);
  ep.path = slash == std::string::npos ? "/" : url.substr(slash);
  if (url.compare(0, scheme, "http") != 0)
    throw SchemaError("endpoint '" + url + "': only http:// endpoints are supported");
  return ep;
}

HttpResult post_json(const HttpEndpoint& endpoint, const std::string& body, const std::string& bearer_token,
                     double timeout_seconds) {
  httplib::Client cli(endpoint.base);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
  auto res = cli.Post(endpoint.path, headers, body, "application/json");
  if (!res) {
    throw ProviderError("transport failure contacting " + endpoint.base + endpoint.path + ": " +
                        httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace kgbo
