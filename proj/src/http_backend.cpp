#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <fmt/format.h>
#include <json.hpp>
#include <thread>

#include "llmcer/error.hpp"
#include "llmcer/llm_gateway.hpp"

namespace llmcer {

void ProviderConfig::validate() const {
    if (temperature < 0.0) throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
    if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
        throw Error(ErrorCode::ConfigError, fmt::format("endpoint '{}' is not an http(s) URL", endpoint));
    }
    if (model.empty()) throw Error(ErrorCode::ConfigError, "model name is empty");
    if (requests_per_minute < 0.0) throw Error(ErrorCode::ConfigError, "requests_per_minute must be >= 0");
}

RateLimiter::RateLimiter(double requests_per_minute)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, requests_per_minute / 60.0)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (rate_per_sec_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

namespace {

std::string read_key(const ProviderConfig& config) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(ErrorCode::ConfigError,
                    fmt::format("API key variable {} is not set", config.api_key_env));
    }
    return key;
}

}  // namespace

HttpBackend::HttpBackend(ProviderConfig config) : HttpBackend(config, read_key(config)) {}

HttpBackend::HttpBackend(ProviderConfig config, std::string api_key)
    : config_(std::move(config)), api_key_(std::move(api_key)), limiter_(config_.requests_per_minute) {
    config_.validate();
    const std::size_t scheme_end = config_.endpoint.find("://") + 3;
    const std::size_t path_start = config_.endpoint.find('/', scheme_end);
    base_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string HttpBackend::request_body(const Prompt& prompt) const {
    nlohmann::json body = {
        {"model", config_.model},
        {"temperature", config_.temperature},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", prompt.system_text}},
                                {{"role", "user"}, {"content", prompt.user_text}}})},
    };
    return body.dump();
}

Completion HttpBackend::complete(const Prompt& prompt) {
    const std::string body = request_body(prompt);
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = config_.backoff_base * (1LL << std::min<std::size_t>(attempt - 1, 5));
            std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(delay, std::chrono::seconds(30)));
        }
        limiter_.acquire();

        httplib::Client client(base_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = fmt::format("transport error: {}", httplib::to_string(res.error()));
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw Error(ErrorCode::ProviderUnavailable, fmt::format("authentication failed (HTTP {})", res->status));
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = fmt::format("HTTP {}", res->status);
            continue;
        }
        if (res->status != 200) {
            throw Error(ErrorCode::ProviderUnavailable, fmt::format("HTTP {}: {}", res->status, res->body));
        }
        try {
            const auto json = nlohmann::json::parse(res->body);
            Completion c;
            c.text = json.at("choices").at(0).at("message").at("content").get<std::string>();
            if (json.contains("usage") && json["usage"].is_object()) {
                const auto& usage = json["usage"];
                if (usage.contains("prompt_tokens")) c.tokens_in = usage["prompt_tokens"].get<std::uint64_t>();
                if (usage.contains("completion_tokens")) {
                    c.tokens_out = usage["completion_tokens"].get<std::uint64_t>();
                }
            }
            return c;
        } catch (const nlohmann::json::exception& e) {
            last_error = fmt::format("unreadable response body: {}", e.what());
        }
    }
    throw Error(ErrorCode::ProviderUnavailable,
                fmt::format("{} attempts failed, last: {}", config_.max_retries + 1, last_error));
}

}  // namespace llmcer
