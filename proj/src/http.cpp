#include "mdqa/http.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace mdqa {

Throttle::Throttle(std::size_t max_in_flight, double requests_per_minute)
    : max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {
  if (requests_per_minute > 0.0) {
    interval_ = std::chrono::nanoseconds(static_cast<long long>(60e9 / requests_per_minute));
  }
}

Throttle::Permit::~Permit() {
  if (owner_) owner_->release();
}

Throttle::Permit Throttle::acquire() {
  std::chrono::steady_clock::time_point start;
  {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
    const auto now = std::chrono::steady_clock::now();
    start = std::max(now, next_start_);
    if (interval_.count() > 0) next_start_ = start + interval_;
  }
  std::this_thread::sleep_until(start);
  return Permit(this);
}

void Throttle::release() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  cv_.notify_one();
}

void sleep_for(std::chrono::milliseconds duration) { std::this_thread::sleep_for(duration); }

std::string api_key_from_env(const std::string& variable) {
  if (variable.empty()) return {};
  const char* value = std::getenv(variable.c_str());
  return value ? value : "";
}

JsonHttpClient::JsonHttpClient(Endpoint endpoint, std::shared_ptr<Throttle> throttle)
    : endpoint_(std::move(endpoint)), throttle_(std::move(throttle)) {
  const auto scheme_end = endpoint_.url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint url needs a scheme: '" + endpoint_.url + "'");
  const auto path_start = endpoint_.url.find('/', scheme_end + 3);
  origin_ = endpoint_.url.substr(0, path_start);
  if (path_start != std::string::npos) base_path_ = endpoint_.url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (!throttle_) throttle_ = std::make_shared<Throttle>();
}

JsonHttpClient::~JsonHttpClient() = default;

nlohmann::json JsonHttpClient::post(std::string_view path, const nlohmann::json& body) const {
  auto permit = throttle_->acquire();
  httplib::Client client(origin_);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(endpoint_.timeout);
  client.set_write_timeout(endpoint_.timeout);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  const std::string target = base_path_ + std::string(path);
  auto result = client.Post(target, headers, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                            "application/json");
  if (!result) {
    throw TransportError("POST " + origin_ + target + " failed: " + httplib::to_string(result.error()));
  }
  const int status = result->status;
  if (status == 429 || status >= 500) {
    throw TransportError("POST " + origin_ + target + " returned HTTP " + std::to_string(status));
  }
  if (status < 200 || status >= 300) {
    throw ProviderError("POST " + origin_ + target + " returned HTTP " + std::to_string(status) + ": " +
                        result->body.substr(0, 200));
  }
  try {
    return nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError("POST " + origin_ + target + ": response is not JSON: " + e.what());
  }
}

}  // namespace mdqa
