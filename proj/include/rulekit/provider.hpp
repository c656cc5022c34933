// Copyright 2026 The rulekit Authors.
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

// Text-generation backends: request/response types, retry policy, bounded
// concurrent batching, and a deterministic mock.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "rulekit/error.hpp"
#include "rulekit/rng.hpp"

namespace rulekit {

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_new_tokens = 256;
  std::string model_id;
  std::optional<std::int64_t> seed;

  void validate() const {
    if (!(temperature >= 0.0))
      throw ArgumentError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0))
      throw ArgumentError("top_p must lie in (0, 1]");
    if (max_new_tokens < 1) throw ArgumentError("max_new_tokens must be >= 1");
  }
};

/// Final output plus the reasoning trace that preceded it (possibly empty).
struct ReasoningCompletion {
  std::string output;
  std::string reasoning;

  friend bool operator==(const ReasoningCompletion&,
                         const ReasoningCompletion&) = default;
};

/// Sampling parameters per model role.
struct SamplingParams {
  double temperature;
  double top_p;
  int max_new_tokens;

  CompletionRequest request(std::string prompt, std::string model_id = {},
                            std::optional<std::int64_t> seed = {}) const {
    return {std::move(prompt), temperature, top_p, max_new_tokens,
            std::move(model_id), seed};
  }
};

namespace defaults {
// Reasoning model for all three extraction stages.
inline constexpr SamplingParams kExtraction{0.6, 1.0, 32768};
// Verifier during training and agreement measurement.
inline constexpr SamplingParams kVerifier{0.0, 1.0, 256};
// Verifier when measuring determinism.
inline constexpr SamplingParams kDeterminism{1.0, 1.0, 256};
inline constexpr SamplingParams kJudge{0.0, 1.0, 1024};
}  // namespace defaults

/// Splits raw model text into (output, reasoning). An explicit reasoning
/// field wins; otherwise a leading <think>...</think> block is used.
/// Throws ProviderError(kMissingText) when no output text remains.
inline ReasoningCompletion completion_from_text(
    std::string_view text, std::optional<std::string_view> reasoning_field = {}) {
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  };
  ReasoningCompletion out;
  std::string_view body = text;
  constexpr std::string_view kOpen = "<think>";
  constexpr std::string_view kClose = "</think>";
  std::string_view delimited;
  if (auto close = body.find(kClose); close != std::string_view::npos) {
    const auto open = body.substr(0, close).find(kOpen);
    // Some hosts strip the opening tag and stream only the closing one.
    const auto start = open == std::string_view::npos ? 0 : open + kOpen.size();
    delimited = body.substr(start, close - start);
    body = body.substr(close + kClose.size());
  }
  if (reasoning_field && !trim(*reasoning_field).empty()) {
    out.reasoning = std::string(trim(*reasoning_field));
  } else {
    out.reasoning = std::string(trim(delimited));
  }
  out.output = std::string(trim(body));
  if (out.output.empty())
    throw ProviderError(ProviderErrorKind::kMissingText,
                        "response missing text");
  return out;
}

/// Thread-safe text-generation backend.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ReasoningCompletion complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Retries

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  std::chrono::milliseconds delay_before_retry(int failed_attempts) const {
    double ms = static_cast<double>(base_delay.count());
    for (int i = 1; i < failed_attempts; ++i) ms *= factor;
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
  }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) {
  std::this_thread::sleep_for(d);
}

/// Transport failures, 429 and 5xx are retryable; other 4xx and
/// malformed responses are not.
inline bool is_retryable(const ProviderError& e) {
  switch (e.kind()) {
    case ProviderErrorKind::kTransport:
      return true;
    case ProviderErrorKind::kHttpStatus:
      return e.status() == 429 || e.status() >= 500;
    case ProviderErrorKind::kMissingText:
      return false;
  }
  return false;
}

/// Invokes `attempt` until it succeeds, a non-retryable ProviderError is
/// thrown, or the policy's attempts are exhausted.
template <class F>
auto call_with_retries(F&& attempt, const RetryPolicy& policy,
                       const Sleeper& sleep = real_sleep) -> decltype(attempt()) {
  for (int n = 1;; ++n) {
    try {
      return attempt();
    } catch (const ProviderError& e) {
      if (!is_retryable(e) || n >= policy.max_attempts) throw;
      sleep(policy.delay_before_retry(n));
    }
  }
}

// ---------------------------------------------------------------------------
// Batching

/// Runs func(i) for i in [0, n) on at most max_concurrency threads.
/// func must not throw.
template <class F>
void parallel_for(std::size_t n, std::size_t max_concurrency, F&& func) {
  if (max_concurrency == 0) throw ArgumentError("max_concurrency must be >= 1");
  const std::size_t workers = std::min(max_concurrency, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) func(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) func(i);
    });
  }
}

/// Result i always corresponds to request i; failures are per item.
inline std::vector<Outcome<ReasoningCompletion>> complete_batch(
    Provider& provider, const std::vector<CompletionRequest>& requests,
    std::size_t max_concurrency) {
  if (max_concurrency == 0) throw ArgumentError("max_concurrency must be >= 1");
  std::vector<std::optional<Outcome<ReasoningCompletion>>> slots(
      requests.size());
  parallel_for(requests.size(), max_concurrency, [&](std::size_t i) {
    try {
      requests[i].validate();
      slots[i] = Outcome<ReasoningCompletion>::success(
          provider.complete(requests[i]));
    } catch (const std::exception& e) {
      slots[i] = Outcome<ReasoningCompletion>::failure(e.what());
    }
  });
  std::vector<Outcome<ReasoningCompletion>> results;
  results.reserve(slots.size());
  for (auto& s : slots) results.push_back(std::move(*s));
  return results;
}

// ---------------------------------------------------------------------------
// Mock

inline std::uint64_t prompt_fingerprint(std::string_view prompt) {
  return fnv1a64(prompt);
}

/// Deterministic in-process provider. Scripted prompts (matched by
/// fingerprint) return their reply verbatim; everything else goes to the
/// fallback responder, which by default derives a reply from a seeded hash
/// of the prompt text.
class MockProvider : public Provider {
 public:
  using Responder = std::function<ReasoningCompletion(const CompletionRequest&)>;

  explicit MockProvider(Responder fallback = {}, std::uint64_t seed = 0)
      : fallback_(std::move(fallback)), seed_(seed) {}

  void script(std::string_view prompt, ReasoningCompletion reply) {
    std::lock_guard lock(mu_);
    script_[prompt_fingerprint(prompt)] = std::move(reply);
  }

  ReasoningCompletion complete(const CompletionRequest& request) override {
    request.validate();
    calls_.fetch_add(1, std::memory_order_relaxed);
    {
      std::lock_guard lock(mu_);
      auto it = script_.find(prompt_fingerprint(request.prompt));
      if (it != script_.end()) return it->second;
    }
    if (fallback_) return fallback_(request);
    return hashed_reply(request.prompt, seed_);
  }

  std::size_t calls() const noexcept { return calls_.load(); }

  static ReasoningCompletion hashed_reply(std::string_view prompt,
                                          std::uint64_t seed) {
    const std::uint64_t h = mix64(prompt_fingerprint(prompt) ^ mix64(seed));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    return {std::string("mock-output-") + buf,
            std::string("mock-reasoning-") + buf};
  }

 private:
  Responder fallback_;
  std::uint64_t seed_;
  std::mutex mu_;
  std::unordered_map<std::uint64_t, ReasoningCompletion> script_;
  std::atomic<std::size_t> calls_{0};
};

/// Adds retries around another provider.
class RetryingProvider : public Provider {
 public:
  RetryingProvider(Provider& inner, RetryPolicy policy, Sleeper sleep = real_sleep)
      : inner_(inner), policy_(policy), sleep_(std::move(sleep)) {}

  ReasoningCompletion complete(const CompletionRequest& request) override {
    return call_with_retries([&] { return inner_.complete(request); }, policy_,
                             sleep_);
  }

 private:
  Provider& inner_;
  RetryPolicy policy_;
  Sleeper sleep_;
};

}  // namespace rulekit
