#include "http_client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "promptlearn/error.hpp"

namespace pl {

ParsedUrl parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) fail(ErrorCode::kConfig, "endpoint '" + std::string(url) + "' lacks a scheme");
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    fail(ErrorCode::kConfig, "endpoint '" + std::string(url) + "': unsupported scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string_view::npos) {
    out.scheme_host_port = std::string(url);
  } else {
    out.scheme_host_port = std::string(url.substr(0, path_start));
    out.base_path = std::string(url.substr(path_start));
  }
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  if (out.scheme_host_port.size() <= scheme_end + 3) fail(ErrorCode::kConfig, "endpoint '" + std::string(url) + "' has no host");
  return out;
}

HttpJsonClient::HttpJsonClient(HttpOptions options)
    : options_(std::move(options)),
      url_(parse_url(options_.endpoint)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.max_in_flight, 1, 1024))),
      jitter_rng_(options_.retry.jitter_seed) {}

double HttpJsonClient::backoff_delay(int attempt) const {
  const auto& r = options_.retry;
  double delay = r.base_delay_s * std::pow(r.factor, attempt);
  if (r.jitter > 0.0) {
    std::lock_guard lock(rng_mutex_);
    delay *= 1.0 + r.jitter * (2.0 * jitter_rng_.uniform() - 1.0);
  }
  return std::max(0.0, delay);
}

nlohmann::json HttpJsonClient::post(std::string_view path, const nlohmann::json& body) const {
  const std::string full_path = url_.base_path + std::string(path);
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (options_.bearer_token) headers.emplace("Authorization", "Bearer " + *options_.bearer_token);

  const auto timeout = std::chrono::duration<double>(options_.timeout_s);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  std::string last_error;
  const int attempts = std::max(0, options_.retry.max_retries) + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      in_flight_.acquire();
      httplib::Client cli(url_.scheme_host_port);
      cli.set_connection_timeout(timeout_us);
      cli.set_read_timeout(timeout_us);
      cli.set_write_timeout(timeout_us);
      ++requests_;
      res = cli.Post(full_path, headers, payload, "application/json");
      in_flight_.release();
    }

    if (!res) {
      last_error = "request to " + url_.scheme_host_port + full_path + " failed: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kProtocol, "malformed JSON from " + full_path + ": " + e.what());
      }
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + " from " + full_path;
    } else {
      fail(ErrorCode::kNetwork, "HTTP " + std::to_string(res->status) + " from " + full_path + ": " + res->body);
    }

    if (attempt + 1 < attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff_delay(attempt)));
    }
  }
  fail(ErrorCode::kNetwork, last_error + " (after " + std::to_string(attempts) + " attempts)");
}

}  // namespace pl
