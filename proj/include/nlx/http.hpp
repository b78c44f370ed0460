#pragma once

// Minimal JSON-over-HTTP POST with timeout, bounded retries and exponential
// backoff. The transport is swappable so callers can be tested offline.

#include <chrono>
#include <functional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "nlx/error.hpp"

namespace nlx {

struct HttpEndpoint {
  std::string url;         // scheme://host[:port]/path
  std::string auth_token;  // sent as "Authorization: Bearer <token>" when set
  double timeout_seconds = 30.0;
  int retries = 3;         // attempts after the first one
  double backoff_seconds = 0.5;
};

struct HttpResponse {
  int status = 0;          // 0 = transport failure
  std::string body;
  std::string error;
};

using HttpTransport = std::function<HttpResponse(const HttpEndpoint&, const std::string& body)>;

namespace detail {

inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint URL '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace detail

inline HttpResponse httplib_transport(const HttpEndpoint& ep, const std::string& body) {
  const auto [base, path] = detail::split_url(ep.url);
  httplib::Client client(base);
  const auto secs = static_cast<time_t>(ep.timeout_seconds);
  const auto usecs = static_cast<time_t>((ep.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!ep.auth_token.empty()) headers.emplace("Authorization", "Bearer " + ep.auth_token);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) return {0, {}, httplib::to_string(res.error())};
  return {res->status, res->body, {}};
}

// POSTs `request` and returns the parsed JSON reply. Transport failures,
// 429 and 5xx are retried; anything else non-2xx fails immediately.
inline nlohmann::json post_json(const HttpEndpoint& ep, const nlohmann::json& request,
                                const HttpTransport& transport = httplib_transport) {
  const std::string body = request.dump();
  std::string last;
  int attempts = 0;
  for (int attempt = 0; attempt <= ep.retries; ++attempt) {
    ++attempts;
    if (attempt > 0) {
      const double wait = ep.backoff_seconds * static_cast<double>(1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    const auto res = transport(ep, body);
    if (res.status >= 200 && res.status < 300) {
      try {
        return nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::exception& e) {
        throw ProviderError("endpoint " + ep.url + " returned invalid JSON: " + e.what());
      }
    }
    last = res.status == 0 ? "transport error: " + res.error : "HTTP " + std::to_string(res.status);
    const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    if (!retryable) break;
  }
  throw ProviderError("request to " + ep.url + " failed after " + std::to_string(attempts) +
                      " attempt(s): " + last);
}

}  // namespace nlx
