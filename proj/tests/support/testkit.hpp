#pragma once

// Shared helpers for the unit and acceptance suites.

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mdqa/corpus.hpp"
#include "mdqa/http.hpp"
#include "mdqa/rerank.hpp"

#include "oracles.hpp"

namespace httplib {
class Server;
}

namespace testkit {

std::filesystem::path fixture_dir();  // tests/fixtures
std::filesystem::path golden_dir();   // tests/golden
std::filesystem::path data_dir();     // data/

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Zipf-ish vocabulary words "w0".."w{n-1}"; low indices are frequent.
std::string random_words(std::mt19937_64& rng, std::size_t count, std::size_t vocabulary);

/// `n` passages "p000".. spread over articles "a0".."a{n/5}" with random text.
std::vector<mdqa::Passage> synthetic_passages(std::mt19937_64& rng, std::size_t n, std::size_t vocabulary = 60);

std::vector<oracle::RawDoc> raw_docs(std::span<const mdqa::Passage> passages);

/// The Messe fixture prompt rendered by the library with two shots; the
/// question embedding is pinned so dynamic selection is fixed.
std::string render_messe_prompt(bool cot, bool dynamic);

/// Scores looked up by passage id; unknown ids score -100. Counts calls.
class TableScorer final : public mdqa::RelevanceScorer {
 public:
  explicit TableScorer(std::unordered_map<std::string, double> table) : table_(std::move(table)) {}
  std::string identity() const override { return "table"; }
  std::vector<double> score(std::string_view question, std::span<const mdqa::Passage> candidates) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::unordered_map<std::string, double> table_;
  std::atomic<std::size_t> calls_{0};
};

inline mdqa::Endpoint endpoint(std::string url) {
  mdqa::Endpoint e;
  e.url = std::move(url);
  return e;
}

/// httplib server on 127.0.0.1 with an ephemeral port, running on its own thread.
class MockServer {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json& body, int& status)>;

  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Registers a POST handler; must be called before start().
  void on(const std::string& path, Handler handler);
  void start();
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t requests() const { return requests_.load(); }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace testkit
