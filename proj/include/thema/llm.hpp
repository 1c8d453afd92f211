// Copyright 2026 The Thema Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace thema {

// ---------------------------------------------------------------------------
// Requests and responses
// ---------------------------------------------------------------------------

struct ChatRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;  // [0, 2]
  int max_output_tokens = 4096;
  std::string seed_tag;  // run provenance, not sent to the provider
};

/// Throws UsageError when temperature is outside [0, 2], the prompt is
/// empty, or max_output_tokens is not positive.
void validate(const ChatRequest& request);

struct TokenUsage {
  std::int64_t input = 0;
  std::int64_t output = 0;
};

struct ChatResponse {
  std::string text;
  std::string model;
  TokenUsage usage;
  std::int64_t latency_ms = 0;
  bool truncated = false;  // provider stopped on its length limit
  int attempts = 1;
};

/// Embedding with its Euclidean norm cached.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dimension() const noexcept { return values_.size(); }
  double norm() const noexcept { return norm_; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Provider interfaces. Implementations are safe for concurrent use.
// ---------------------------------------------------------------------------

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One vector per text, in input order, all of one dimension.
  virtual std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& texts) = 0;
  virtual std::string id() const = 0;
};

/// Shared precondition for embed(): non-empty list of non-empty texts.
void check_embed_input(const std::vector<std::string>& texts);

/// Throws ProviderError unless every vector has the same dimension and there
/// is one vector per text.
void check_embed_output(const std::vector<EmbeddingVector>& vectors,
                        std::size_t expected_count);

// ---------------------------------------------------------------------------
// Retry, rate limiting, concurrency
// ---------------------------------------------------------------------------

using Sleeper = std::function<void(std::chrono::milliseconds)>;
using EventSink = std::function<void(std::string_view)>;

Sleeper real_sleeper();

/// Exponential backoff: the delay before attempt k (k >= 2) is
/// base * factor^(k-2). Defaults give 1s, 2s, 4s, 8s over 5 attempts.
struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  std::chrono::milliseconds delay_before(int attempt) const;
  std::chrono::milliseconds max_total_delay() const;
};

/// 429, 5xx and transport failures (status 0) are retryable.
bool is_retryable_status(int status);

/// Token bucket. Refills continuously at `per_minute` tokens per minute up to
/// `burst`. acquire() blocks until a token is available.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  using Now = std::function<Clock::time_point()>;

  RateLimiter(double per_minute, double burst, Now now = Clock::now,
              Sleeper sleep = real_sleeper());

  void acquire();

 private:
  double rate_per_ms_;
  double burst_;
  Now now_;
  Sleeper sleep_;
  std::mutex mu_;
  double tokens_;
  Clock::time_point last_;
};

/// Runs `fn(i)` for i in [0, n) on at most `max_parallel` threads.
/// `fn` must not throw; capture failures per index.
void parallel_for(std::size_t n, std::size_t max_parallel,
                  const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// HTTP transport and live providers
// ---------------------------------------------------------------------------

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{120000};
};

struct HttpResponse {
  int status = 0;  // 0 when no response arrived
  std::string body;
  std::string error;  // transport error description when status == 0
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

std::shared_ptr<HttpTransport> make_default_transport();

struct EndpointOptions {
  std::string url;
  std::string model;
  std::string api_key;  // never logged
  std::chrono::milliseconds timeout{120000};
  RetryPolicy retry;
  double requests_per_minute = 30.0;
  int max_parallel = 4;
  Sleeper sleep = real_sleeper();
  EventSink events;  // optional; receives retry notices
};

/// Chat-completions JSON over HTTP: {"model", "messages", "temperature",
/// "max_tokens"} in, choices[0].message.content out.
class HttpChatProvider final : public ChatProvider {
 public:
  HttpChatProvider(EndpointOptions options,
                   std::shared_ptr<HttpTransport> transport);

  ChatResponse chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  EndpointOptions options_;
  std::shared_ptr<HttpTransport> transport_;
  RateLimiter limiter_;
  std::counting_semaphore<1024> slots_;
};

/// Embeddings JSON over HTTP: {"model", "input": [...]} in, data[].embedding
/// out. Inputs are sent in batches of `batch_size`.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(EndpointOptions options,
                        std::shared_ptr<HttpTransport> transport,
                        std::size_t batch_size = 64);

  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& texts) override;
  std::string id() const override;

 private:
  EndpointOptions options_;
  std::shared_ptr<HttpTransport> transport_;
  RateLimiter limiter_;
  std::counting_semaphore<1024> slots_;
  std::size_t batch_size_;
};

/// Sends `body` with retries per `options.retry`. Returns the successful
/// response and the number of attempts used. Exposed for tests.
std::pair<HttpResponse, int> post_with_retry(HttpTransport& transport,
                                             const EndpointOptions& options,
                                             RateLimiter& limiter,
                                             const std::string& body);

// ---------------------------------------------------------------------------
// Mocks
// ---------------------------------------------------------------------------

/// A canned response selected when `match` is a substring of the prompt and,
/// if set, the request temperature equals `temperature`.
struct Fixture {
  std::string match;
  std::optional<double> temperature;
  std::string response;
};

/// Answers with the first matching fixture in list order; an unmatched
/// prompt throws ProviderError("no fixture ..."). Deterministic.
class MockChatProvider final : public ChatProvider {
 public:
  explicit MockChatProvider(std::vector<Fixture> fixtures,
                            std::string model = "mock-chat");

  ChatResponse chat(const ChatRequest& request) override;
  std::string id() const override { return model_; }

  std::size_t call_count() const;
  std::vector<ChatRequest> calls() const;

 private:
  std::vector<Fixture> fixtures_;
  std::string model_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> calls_;
};

/// Reads `<dir>/fixtures.json`: an array of
/// {"match": str, "temperature"?: num, "response"?: str, "response_file"?: str}
/// where response_file is relative to `dir`.
std::vector<Fixture> load_fixtures(const std::filesystem::path& dir);

std::shared_ptr<MockChatProvider> mock_chat_provider(
    std::vector<Fixture> fixtures);

/// Bag-of-words hashing embedder:
///   1. casefold (ASCII and U+00C0..U+00DE),
///   2. split into maximal runs of letters (text::is_letter),
///   3. bucket = fnv1a32(token UTF-8 bytes) % dimension, count occurrences,
///   4. divide by the L2 norm.
/// Text with no letters is rejected.
class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::size_t dimension);

  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& texts) override;
  std::string id() const override;

  EmbeddingVector embed_one(std::string_view text) const;

 private:
  std::size_t dimension_;
};

std::shared_ptr<MockEmbeddingProvider> mock_embedding_provider(
    std::size_t dimension);

}  // namespace thema
