#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "promptlearn/scoring.hpp"
#include "promptlearn/util.hpp"

namespace pl {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string base_path;  // no trailing slash
};

ParsedUrl parse_url(std::string_view url);

// JSON-over-HTTP POST with bounded in-flight requests and exponential backoff.
// Connection failures, timeouts, 429 and 5xx are retried; any other status
// fails at once, and a 2xx body that is not JSON is a protocol error that is
// never retried.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(HttpOptions options);

  nlohmann::json post(std::string_view path, const nlohmann::json& body) const;

  std::size_t requests_sent() const noexcept { return requests_.load(); }
  const HttpOptions& options() const noexcept { return options_; }

 private:
  double backoff_delay(int attempt) const;

  HttpOptions options_;
  ParsedUrl url_;
  mutable std::counting_semaphore<1024> in_flight_;
  mutable std::atomic<std::size_t> requests_{0};
  mutable std::mutex rng_mutex_;
  mutable Rng jitter_rng_;
};

}  // namespace pl
