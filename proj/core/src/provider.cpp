#include "dualtrace/provider.hpp"

#include "dualtrace/errors.hpp"
#include "text_util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace dualtrace::provider {

std::int64_t count_tokens(std::string_view text) {
    std::int64_t count = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_token) ++count;
        in_token = !space;
    }
    return count;
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::uint64_t MockProvider::request_hash(const Request& request) {
    std::string keyed;
    for (const auto& m : request.messages) {
        keyed += m.role;
        keyed += '\x1f';
        keyed += m.content;
        keyed += '\x1e';
    }
    return fnv1a(keyed);
}

void MockProvider::add_fixture(const Request& request, std::string reply) {
    std::lock_guard lock(mutex_);
    fixtures_[request_hash(request)] = std::move(reply);
}

namespace {

struct FactBlock {
    std::string slug;
    std::string timestamp;
    std::vector<std::string> components;
};

std::string slug_words(const std::string& slug) {
    std::string words = slug;
    std::replace(words.begin(), words.end(), '_', ' ');
    return words;
}

} // namespace

// Reads retrieved [FACT:...] blocks and the "Question:" line out of the
// prompt text and synthesizes a deterministic answer. Scene blocks are
// skipped so only fact components feed the reply.
std::string MockProvider::answer_from_prompt(const std::string& prompt) const {
    std::vector<FactBlock> blocks;
    std::string question;
    bool collecting = false;

    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        if (line.starts_with("[FACT:") && line.ends_with("]")) {
            blocks.push_back({line.substr(6, line.size() - 7), {}, {}});
            collecting = true;
        } else if (line.starts_with("[SCENE:")) {
            collecting = false;
        } else if (line.starts_with("Question: ")) {
            question = line.substr(10);
        } else if (collecting && line.starts_with("timestamp: ")) {
            blocks.back().timestamp = line.substr(11);
        } else if (collecting && line.starts_with("- ")) {
            blocks.back().components.push_back(line.substr(2));
        }
    }

    if (blocks.empty()) return "I could not find relevant information in the prompt.";

    const auto lowered = detail::to_lower(question);
    if (lowered.find("first") != std::string::npos ||
        lowered.find("earliest") != std::string::npos) {
        const auto earliest = std::min_element(
            blocks.begin(), blocks.end(),
            [](const FactBlock& a, const FactBlock& b) { return a.timestamp < b.timestamp; });
        return "The earliest was the " + slug_words(earliest->slug) + " on " +
               earliest->timestamp.substr(0, 10) + ".";
    }

    std::string answer;
    for (const auto& block : blocks) {
        if (!answer.empty()) answer += " and ";
        for (std::size_t i = 0; i < block.components.size(); ++i) {
            if (i) answer += ", ";
            answer += block.components[i];
        }
    }
    return answer;
}

Response MockProvider::generate(const Request& request) {
    if (request.messages.empty()) throw ProviderError("empty message list", false);

    std::string all_content;
    for (const auto& m : request.messages) {
        all_content += m.content;
        all_content += '\n';
    }

    bool stall = false;
    {
        std::lock_guard lock(mutex_);
        if (fail_next_ > 0) {
            --fail_next_;
            throw ProviderError("simulated timeout", true);
        }
        stall = !stall_marker_.empty() && all_content.find(stall_marker_) != std::string::npos;
    }
    if (stall) std::this_thread::sleep_for(stall_duration_);

    std::string text;
    switch (mode_) {
    case Mode::Echo: {
        const Message* last_user = nullptr;
        for (const auto& m : request.messages)
            if (m.role == "user") last_user = &m;
        text = last_user ? last_user->content : request.messages.back().content;
        break;
    }
    case Mode::Fixture: {
        std::lock_guard lock(mutex_);
        const auto hash = request_hash(request);
        const auto it = fixtures_.find(hash);
        if (it == fixtures_.end()) {
            std::ostringstream msg;
            msg << "no fixture for request hash 0x" << std::hex << hash;
            throw ProviderError(msg.str(), false);
        }
        text = it->second;
        break;
    }
    case Mode::Recall:
        text = answer_from_prompt(all_content);
        break;
    }

    Response response;
    response.text = std::move(text);
    for (const auto& m : request.messages) response.prompt_tokens += count_tokens(m.content);
    response.completion_tokens = count_tokens(response.text);

    std::lock_guard lock(mutex_);
    ++calls_;
    total_prompt_ += response.prompt_tokens;
    total_completion_ += response.completion_tokens;
    return response;
}

std::vector<std::vector<double>> MockProvider::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ProviderError("empty input list", false);
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(kEmbedDim, 0.0);
        for (const auto& token : detail::tokenize(text)) v[fnv1a(token) % kEmbedDim] += 1.0;
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpProvider::HttpProvider(HttpConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ProviderError("provider base_url not configured", false);
    while (config_.base_url.ends_with('/')) config_.base_url.pop_back();
    // Accept both ".../v1" and bare-origin base URLs.
    if (config_.base_url.ends_with("/v1"))
        config_.base_url.resize(config_.base_url.size() - 3);
}

std::string HttpProvider::post_with_retries(const std::string& path, const std::string& body) {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 1)));

        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.call_timeout_seconds, 0);
        client.set_read_timeout(config_.call_timeout_seconds, 0);
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue; // retryable
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "backend status " + std::to_string(res->status);
            continue; // retryable
        }
        if (res->status != 200)
            throw ProviderError("backend status " + std::to_string(res->status) + ": " +
                                    res->body,
                                false);
        return res->body;
    }
    throw ProviderError(last_error + " after " + std::to_string(config_.max_retries + 1) +
                            " attempts",
                        true);
}

Response HttpProvider::generate(const Request& request) {
    if (request.messages.empty()) throw ProviderError("empty message list", false);

    nlohmann::json body;
    body["model"] = config_.model;
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    auto& messages = body["messages"] = nlohmann::json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});

    const auto reply = post_with_retries("/v1/chat/completions", body.dump());
    try {
        const auto parsed = nlohmann::json::parse(reply);
        Response response;
        response.text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        if (parsed.contains("usage")) {
            response.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
            response.completion_tokens = parsed["usage"].value("completion_tokens", 0);
        } else {
            for (const auto& m : request.messages)
                response.prompt_tokens += count_tokens(m.content);
            response.completion_tokens = count_tokens(response.text);
        }
        return response;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed backend reply: ") + e.what(), false);
    }
}

std::vector<std::vector<double>> HttpProvider::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ProviderError("empty input list", false);

    nlohmann::json body;
    body["model"] = config_.embed_model;
    body["input"] = texts;

    const auto reply = post_with_retries("/v1/embeddings", body.dump());
    try {
        const auto parsed = nlohmann::json::parse(reply);
        std::vector<std::vector<double>> out;
        for (const auto& item : parsed.at("data"))
            out.push_back(item.at("embedding").get<std::vector<double>>());
        if (out.size() != texts.size())
            throw ProviderError("embedding count mismatch", false);
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed backend reply: ") + e.what(), false);
    }
}

} // namespace dualtrace::provider
