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

#include "thema/llm.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "thema/error.hpp"
#include "thema/text.hpp"

namespace thema {

using json = nlohmann::json;
using std::chrono::milliseconds;

void validate(const ChatRequest& request) {
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
    throw UsageError(fmt::format("temperature {} outside [0, 2]",
                                 request.temperature));
  }
  if (request.prompt.empty()) throw UsageError("chat prompt is empty");
  if (request.max_output_tokens <= 0) {
    throw UsageError("max_output_tokens must be positive");
  }
}

EmbeddingVector::EmbeddingVector(std::vector<double> values)
    : values_(std::move(values)) {
  double sum = 0.0;
  for (const double v : values_) sum += v * v;
  norm_ = std::sqrt(sum);
}

void check_embed_input(const std::vector<std::string>& texts) {
  if (texts.empty()) throw UsageError("embed: no texts given");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::is_blank(texts[i])) {
      throw UsageError(fmt::format("embed: text {} is empty", i));
    }
  }
}

void check_embed_output(const std::vector<EmbeddingVector>& vectors,
                        std::size_t expected_count) {
  if (vectors.size() != expected_count) {
    throw ProviderError(fmt::format("embed: expected {} vectors, got {}",
                                    expected_count, vectors.size()));
  }
  for (const auto& v : vectors) {
    if (v.dimension() != vectors.front().dimension()) {
      throw ProviderError(fmt::format(
          "embed: dimension mismatch within batch ({} vs {})",
          vectors.front().dimension(), v.dimension()));
    }
  }
}

// ---------------------------------------------------------------------------

Sleeper real_sleeper() {
  return [](milliseconds d) { std::this_thread::sleep_for(d); };
}

milliseconds RetryPolicy::delay_before(int attempt) const {
  if (attempt <= 1) return milliseconds{0};
  const double scale = std::pow(factor, attempt - 2);
  return milliseconds{
      static_cast<milliseconds::rep>(std::llround(base_delay.count() * scale))};
}

milliseconds RetryPolicy::max_total_delay() const {
  milliseconds total{0};
  for (int k = 2; k <= max_attempts; ++k) total += delay_before(k);
  return total;
}

bool is_retryable_status(int status) {
  return status == 0 || status == 429 || status >= 500;
}

RateLimiter::RateLimiter(double per_minute, double burst, Now now,
                         Sleeper sleep)
    : rate_per_ms_(per_minute / 60000.0),
      burst_(std::max(1.0, burst)),
      now_(std::move(now)),
      sleep_(std::move(sleep)),
      tokens_(burst_),
      last_(now_()) {
  if (!(per_minute > 0.0)) {
    throw UsageError("rate limit must be positive");
  }
}

void RateLimiter::acquire() {
  while (true) {
    milliseconds wait{0};
    {
      std::lock_guard lock(mu_);
      const auto now = now_();
      const double elapsed =
          std::chrono::duration<double, std::milli>(now - last_).count();
      last_ = now;
      tokens_ = std::min(burst_, tokens_ + elapsed * rate_per_ms_);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = milliseconds{static_cast<milliseconds::rep>(
          std::ceil((1.0 - tokens_) / rate_per_ms_))};
    }
    sleep_(wait);
  }
}

void parallel_for(std::size_t n, std::size_t max_parallel,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_parallel));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

// ---------------------------------------------------------------------------

std::pair<HttpResponse, int> post_with_retry(HttpTransport& transport,
                                             const EndpointOptions& options,
                                             RateLimiter& limiter,
                                             const std::string& body) {
  HttpRequest request;
  request.url = options.url;
  request.body = body;
  request.timeout = options.timeout;
  request.headers = {{"Content-Type", "application/json"}};
  if (!options.api_key.empty()) {
    request.headers.emplace_back("Authorization",
                                 "Bearer " + options.api_key);
  }

  const int max_attempts = std::max(1, options.retry.max_attempts);
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) {
      const auto delay = options.retry.delay_before(attempt);
      if (options.events) {
        options.events(fmt::format("retry {}/{} after {}ms: {}", attempt,
                                   max_attempts, delay.count(), last_error));
      }
      options.sleep(delay);
    }
    limiter.acquire();
    HttpResponse response = transport.post(request);
    if (response.status >= 200 && response.status < 300) {
      return {std::move(response), attempt};
    }
    const std::string detail = text::scrub(
        response.status == 0 ? response.error
                             : response.body.substr(0, 300),
        options.api_key);
    if (response.status == 401 || response.status == 403) {
      throw ProviderError(
          fmt::format("authentication failed (HTTP {}): {}", response.status,
                      detail));
    }
    if (!is_retryable_status(response.status)) {
      throw ProviderError(
          fmt::format("provider rejected request (HTTP {}): {}",
                      response.status, detail));
    }
    last_error = response.status == 0
                     ? fmt::format("transport: {}", detail)
                     : fmt::format("HTTP {}", response.status);
  }
  throw ProviderError(fmt::format("gave up after {} attempts (last: {})",
                                  max_attempts, last_error),
                      true);
}

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& sem) : sem_(sem) {
    sem_.acquire();
  }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

std::ptrdiff_t slot_count(int max_parallel) {
  return std::clamp<std::ptrdiff_t>(max_parallel, 1, 1024);
}

json parse_body(const HttpResponse& response, std::string_view what) {
  try {
    return json::parse(response.body);
  } catch (const json::exception& e) {
    throw ProviderError(
        fmt::format("{}: response is not JSON ({})", what, e.what()));
  }
}

}  // namespace

HttpChatProvider::HttpChatProvider(EndpointOptions options,
                                   std::shared_ptr<HttpTransport> transport)
    : options_(std::move(options)),
      transport_(std::move(transport)),
      limiter_(options_.requests_per_minute,
               static_cast<double>(options_.max_parallel), RateLimiter::Clock::now,
               options_.sleep),
      slots_(slot_count(options_.max_parallel)) {
  if (options_.url.empty()) throw UsageError("chat endpoint URL not set");
}

ChatResponse HttpChatProvider::chat(const ChatRequest& request) {
  validate(request);
  json body = {
      {"model", request.model.empty() ? options_.model : request.model},
      {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  SlotGuard slot(slots_);
  const auto started = std::chrono::steady_clock::now();
  auto [response, attempts] =
      post_with_retry(*transport_, options_, limiter_, body.dump());
  const auto elapsed = std::chrono::steady_clock::now() - started;

  const json doc = parse_body(response, "chat");
  ChatResponse out;
  out.attempts = attempts;
  out.latency_ms =
      std::chrono::duration_cast<milliseconds>(elapsed).count();
  try {
    const auto& choice = doc.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    if (!content.is_string()) throw ProviderError("chat: content is not text");
    out.text = content.get<std::string>();
    out.truncated = choice.value("finish_reason", std::string{}) == "length";
    out.model = doc.value("model", body["model"].get<std::string>());
    if (doc.contains("usage") && doc["usage"].is_object()) {
      out.usage.input = doc["usage"].value("prompt_tokens", std::int64_t{0});
      out.usage.output =
          doc["usage"].value("completion_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("chat: unexpected response shape ({})",
                                    e.what()));
  }
  if (out.truncated && options_.events) {
    options_.events(fmt::format("response truncated at {} output tokens",
                                request.max_output_tokens));
  }
  return out;
}

std::string HttpChatProvider::id() const { return options_.model; }

HttpEmbeddingProvider::HttpEmbeddingProvider(
    EndpointOptions options, std::shared_ptr<HttpTransport> transport,
    std::size_t batch_size)
    : options_(std::move(options)),
      transport_(std::move(transport)),
      limiter_(options_.requests_per_minute,
               static_cast<double>(options_.max_parallel), RateLimiter::Clock::now,
               options_.sleep),
      slots_(slot_count(options_.max_parallel)),
      batch_size_(std::max<std::size_t>(1, batch_size)) {
  if (options_.url.empty()) throw UsageError("embedding endpoint URL not set");
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  check_embed_input(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const std::size_t end = std::min(texts.size(), start + batch_size_);
    const json body = {
        {"model", options_.model},
        {"input", std::vector<std::string>(texts.begin() + start,
                                           texts.begin() + end)},
    };
    SlotGuard slot(slots_);
    auto [response, attempts] =
        post_with_retry(*transport_, options_, limiter_, body.dump());
    const json doc = parse_body(response, "embed");
    try {
      std::vector<std::pair<std::int64_t, std::vector<double>>> rows;
      std::int64_t position = 0;
      for (const auto& item : doc.at("data")) {
        rows.emplace_back(item.value("index", position),
                          item.at("embedding").get<std::vector<double>>());
        ++position;
      }
      std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.first < b.first;
      });
      if (rows.size() != end - start) {
        throw ProviderError(fmt::format("embed: expected {} vectors, got {}",
                                        end - start, rows.size()));
      }
      for (auto& [index, values] : rows) out.emplace_back(std::move(values));
    } catch (const json::exception& e) {
      throw ProviderError(fmt::format("embed: unexpected response shape ({})",
                                      e.what()));
    }
  }
  check_embed_output(out, texts.size());
  return out;
}

std::string HttpEmbeddingProvider::id() const { return options_.model; }

// ---------------------------------------------------------------------------

MockChatProvider::MockChatProvider(std::vector<Fixture> fixtures,
                                   std::string model)
    : fixtures_(std::move(fixtures)), model_(std::move(model)) {
  if (fixtures_.empty()) throw UsageError("mock chat provider needs fixtures");
}

ChatResponse MockChatProvider::chat(const ChatRequest& request) {
  validate(request);
  {
    std::lock_guard lock(mu_);
    calls_.push_back(request);
  }
  for (const auto& fixture : fixtures_) {
    if (request.prompt.find(fixture.match) == std::string::npos) continue;
    if (fixture.temperature &&
        std::abs(*fixture.temperature - request.temperature) > 1e-9) {
      continue;
    }
    ChatResponse out;
    out.text = fixture.response;
    out.model = model_;
    out.usage.input = static_cast<std::int64_t>(text::word_count(request.prompt));
    out.usage.output = static_cast<std::int64_t>(text::word_count(out.text));
    return out;
  }
  throw ProviderError(fmt::format(
      "no fixture matches prompt (T={}, first 60 bytes: '{}')",
      text::format_real(request.temperature),
      request.prompt.substr(0, 60)));
}

std::size_t MockChatProvider::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

std::vector<ChatRequest> MockChatProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<Fixture> load_fixtures(const std::filesystem::path& dir) {
  const auto file = dir / "fixtures.json";
  json doc;
  try {
    doc = json::parse(text::read_file(file));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", file.string(), e.what()));
  }
  if (!doc.is_array()) {
    throw ParseError(fmt::format("{}: expected a JSON array", file.string()));
  }
  std::vector<Fixture> out;
  for (const auto& item : doc) {
    Fixture f;
    try {
      f.match = item.at("match").get<std::string>();
      if (item.contains("temperature")) {
        f.temperature = item["temperature"].get<double>();
      }
      if (item.contains("response_file")) {
        f.response =
            text::read_file(dir / item["response_file"].get<std::string>());
      } else {
        f.response = item.at("response").get<std::string>();
      }
    } catch (const json::exception& e) {
      throw ParseError(fmt::format("{}: bad fixture entry ({})",
                                   file.string(), e.what()));
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::shared_ptr<MockChatProvider> mock_chat_provider(
    std::vector<Fixture> fixtures) {
  return std::make_shared<MockChatProvider>(std::move(fixtures));
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dimension)
    : dimension_(dimension) {
  if (dimension_ < 8) throw UsageError("mock embedding dimension must be >= 8");
}

EmbeddingVector MockEmbeddingProvider::embed_one(std::string_view input) const {
  std::vector<double> counts(dimension_, 0.0);
  std::string token;
  bool any = false;
  const auto flush = [&] {
    if (token.empty()) return;
    counts[text::fnv1a32(token) % dimension_] += 1.0;
    token.clear();
    any = true;
  };
  for (const char32_t cp : text::decode_utf8(text::casefold(input))) {
    if (text::is_letter(cp)) {
      text::append_utf8(token, cp);
    } else {
      flush();
    }
  }
  flush();
  if (!any) {
    throw UsageError(fmt::format("mock embedder: no letter tokens in '{}'",
                                 input));
  }
  double sum = 0.0;
  for (const double c : counts) sum += c * c;
  const double norm = std::sqrt(sum);
  for (double& c : counts) c /= norm;
  return EmbeddingVector(std::move(counts));
}

std::vector<EmbeddingVector> MockEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  check_embed_input(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::string MockEmbeddingProvider::id() const {
  return fmt::format("mock-hash-{}", dimension_);
}

std::shared_ptr<MockEmbeddingProvider> mock_embedding_provider(
    std::size_t dimension) {
  return std::make_shared<MockEmbeddingProvider>(dimension);
}

}  // namespace thema
