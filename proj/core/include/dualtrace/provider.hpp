// Uniform boundary to text-generation and embedding backends. Every
// acceptance path runs against the deterministic mock; the HTTP client
// speaks the de-facto OpenAI-compatible wire format.
#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace dualtrace::provider {

struct Message {
    std::string role;
    std::string content;
};

struct Request {
    std::vector<Message> messages;
    int max_tokens = 1024;
    double temperature = 0.0;
};

struct Response {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

/// Whitespace token count; the unit of all mock-side accounting.
std::int64_t count_tokens(std::string_view text);

/// 64-bit FNV-1a, used to key fixture replies by request content.
std::uint64_t fnv1a(std::string_view text);

class Provider {
public:
    virtual ~Provider() = default;

    /// Runs one chat completion. Throws ProviderError (retryable for
    /// timeouts/transport faults, fatal for malformed replies or empty
    /// requests).
    virtual Response generate(const Request& request) = 0;

    /// One fixed-dimension vector per input text. Same error contract.
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

/// Deterministic in-process backend.
///
/// Echo:    replies with the last user message.
/// Fixture: replies from a table keyed by the FNV-1a hash of the request
///          messages; unknown request -> fatal ProviderError naming the hash.
/// Recall:  string-level heuristic that reads retrieved [FACT:...] blocks
///          out of the prompt and synthesizes an answer; knows nothing about
///          the store or trace types, so it exercises the real prompts.
///
/// Failure knobs simulate timeouts and stalls for retry/watchdog tests.
class MockProvider : public Provider {
public:
    enum class Mode { Echo, Fixture, Recall };

    explicit MockProvider(Mode mode = Mode::Echo) : mode_(mode) {}

    Response generate(const Request& request) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

    void add_fixture(const Request& request, std::string reply);
    static std::uint64_t request_hash(const Request& request);

    /// The next `calls` generate() calls raise a retryable timeout error.
    void fail_next(int calls) { fail_next_ = calls; }

    /// generate() sleeps for `duration` whenever the request contains
    /// `marker`; used to trip the harness stall monitor.
    void stall_on(std::string marker, std::chrono::milliseconds duration) {
        stall_marker_ = std::move(marker);
        stall_duration_ = duration;
    }

    std::int64_t total_prompt_tokens() const { return total_prompt_; }
    std::int64_t total_completion_tokens() const { return total_completion_; }
    int calls() const { return calls_; }

    static constexpr std::size_t kEmbedDim = 64;

private:
    std::string answer_from_prompt(const std::string& prompt) const;

    Mode mode_;
    std::map<std::uint64_t, std::string> fixtures_;
    int fail_next_ = 0;
    std::string stall_marker_;
    std::chrono::milliseconds stall_duration_{0};
    std::int64_t total_prompt_ = 0;
    std::int64_t total_completion_ = 0;
    int calls_ = 0;
    mutable std::mutex mutex_;
};

struct HttpConfig {
    std::string base_url; // e.g. "https://api.openai.com"
    std::string model;
    std::string api_key;
    std::string embed_model = "text-embedding-3-small";
    int call_timeout_seconds = 300;
    int max_retries = 2;
    std::chrono::milliseconds backoff_base{500};
};

/// OpenAI-compatible chat-completions/embeddings client with bounded
/// exponential-backoff retries on retryable failures (timeouts, transport
/// faults, 429/5xx).
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpConfig config);

    Response generate(const Request& request) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    std::string post_with_retries(const std::string& path, const std::string& body);

    HttpConfig config_;
};

} // namespace dualtrace::provider
