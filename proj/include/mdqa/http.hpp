#pragma once

// JSON-over-HTTP plumbing shared by the provider clients: endpoint parsing,
// retry with exponential backoff, in-flight and rate limiting.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "mdqa/error.hpp"

namespace mdqa {

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Bounds concurrent provider requests and, optionally, their start rate.
class Throttle {
 public:
  explicit Throttle(std::size_t max_in_flight = 8, double requests_per_minute = 0.0);

  class Permit {
   public:
    explicit Permit(Throttle* owner) : owner_(owner) {}
    Permit(Permit&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    Permit& operator=(Permit&&) = delete;
    ~Permit();

   private:
    Throttle* owner_;
  };

  Permit acquire();
  std::size_t max_in_flight() const noexcept { return max_in_flight_; }

 private:
  void release();

  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t max_in_flight_;
  std::size_t in_flight_ = 0;
  std::chrono::nanoseconds interval_{0};
  std::chrono::steady_clock::time_point next_start_{};
};

/// Calls `op` until it succeeds, retrying TransportError with exponential
/// backoff. Throws ProviderUnavailable when attempts are exhausted; other
/// exceptions pass through untouched.
template <typename Op>
auto with_retry(const RetryPolicy& policy, Op&& op,
                const std::function<void(std::chrono::milliseconds)>& sleep = {}) -> decltype(op());

void sleep_for(std::chrono::milliseconds duration);

struct Endpoint {
  std::string url;                // scheme://host[:port][/base-path]
  std::string api_key;            // sent as "Authorization: Bearer <key>" when set
  std::chrono::seconds timeout{120};
};

/// Minimal JSON POST client. Connection failures, timeouts, 429 and 5xx
/// surface as TransportError; other non-2xx as ProviderError; undecodable
/// bodies as ProtocolError.
class JsonHttpClient {
 public:
  JsonHttpClient(Endpoint endpoint, std::shared_ptr<Throttle> throttle);
  ~JsonHttpClient();
  JsonHttpClient(const JsonHttpClient&) = delete;
  JsonHttpClient& operator=(const JsonHttpClient&) = delete;

  nlohmann::json post(std::string_view path, const nlohmann::json& body) const;
  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  Endpoint endpoint_;
  std::string origin_;
  std::string base_path_;
  std::shared_ptr<Throttle> throttle_;
};

/// Reads an API key from the named environment variable ("" when unset).
std::string api_key_from_env(const std::string& variable);

// ---------------------------------------------------------------------------

template <typename Op>
auto with_retry(const RetryPolicy& policy, Op&& op, const std::function<void(std::chrono::milliseconds)>& sleep)
    -> decltype(op()) {
  auto backoff = policy.initial_backoff;
  const int attempts = policy.attempts < 1 ? 1 : policy.attempts;
  for (int attempt = 1;; ++attempt) {
    try {
      return op();
    } catch (const TransportError& e) {
      if (attempt >= attempts) {
        throw ProviderUnavailable("giving up after " + std::to_string(attempts) + " attempts: " + e.what());
      }
      if (sleep) {
        sleep(backoff);
      } else {
        sleep_for(backoff);
      }
      backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
  }
}

}  // namespace mdqa
