#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pla/errors.hpp"
#include "pla/reasoning.hpp"
#include "pla/scene.hpp"

namespace pla::reasoning {

/// A planning backend turns one prompt into raw response text. Implementations
/// must tolerate concurrent plan() calls; the pipeline fans frames out across
/// worker threads.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    virtual std::string plan(const PromptBundle& prompt) = 0;
};

/// Offline backend: recovers the scene from the prompt and answers with the
/// deterministic follower controller. Keeps the full pipeline runnable with no
/// network and no credentials.
class RuleBackend final : public Backend {
public:
    explicit RuleBackend(TaskSpec task = {}) : task_(std::move(task)) { task_.validate(); }

    std::string name() const override { return "rule"; }

    std::string plan(const PromptBundle& prompt) override {
        const auto sc = scene::parse_scene(extract_scene_block(prompt.user_text));
        return command_to_json(rule_plan(sc, task_));
    }

private:
    TaskSpec task_;
};

/// Replays canned responses recorded under <dir>/<frame_id>.txt. Useful for
/// regression-testing against previously collected model output.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!std::filesystem::is_directory(dir_))
            throw ConfigError("replay directory does not exist: " + dir_.string());
    }

    std::string name() const override { return "replay"; }

    std::string plan(const PromptBundle& prompt) override {
        const auto sc = scene::parse_scene(extract_scene_block(prompt.user_text));
        const auto path = dir_ / (sc.frame_id + ".txt");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ReplayMiss(sc.frame_id);
        std::ostringstream body;
        body << in.rdbuf();
        if (in.bad()) throw IoError("failed reading " + path.string());
        return std::move(body).str();
    }

private:
    std::filesystem::path dir_;
};

struct HttpBackendConfig {
    std::string base_url;  // scheme://host[:port][/prefix], e.g. https://api.openai.com/v1
    std::string api_key;
    std::string model = "gpt-4.1";
    int timeout_s = 60;
    int retries = 2;  // extra attempts after the first, exponential backoff
    int max_in_flight = 2;
    double backoff_initial_s = 0.5;
};

namespace detail {

inline const char* mime_for(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".webp") return "image/webp";
    return "image/jpeg";
}

inline std::string base64(std::string_view bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += table[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

/// Splits scheme://host[:port][/path] into the client origin and path prefix.
inline std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("base URL must include a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

}  // namespace detail

/// Chat-completions client for any OpenAI-style endpoint. Auth failures stop
/// immediately; transport errors, 429s, and 5xx responses retry with
/// exponential backoff; a semaphore caps concurrent requests.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty()) throw ConfigError("http backend requires a base URL");
        if (config_.api_key.empty())
            throw ConfigError("http backend requires an API key (set PLA_API_KEY)");
        if (config_.timeout_s <= 0) throw ConfigError("http timeout must be positive");
        if (config_.retries < 0) throw ConfigError("http retry count must be non-negative");
        if (config_.max_in_flight < 1 || config_.max_in_flight > kMaxInFlightCap)
            throw ConfigError("http concurrency must be in [1, 64]");
        (void)detail::split_base_url(config_.base_url);  // fail fast on malformed URLs
        slots_ = std::make_unique<std::counting_semaphore<kMaxInFlightCap>>(config_.max_in_flight);
    }

    std::string name() const override { return "http"; }

    std::string plan(const PromptBundle& prompt) override {
        slots_->acquire();
        struct Release {
            std::counting_semaphore<kMaxInFlightCap>* s;
            ~Release() { s->release(); }
        } release{slots_.get()};

        const std::string body = request_body(prompt).dump();
        const auto [origin, prefix] = detail::split_base_url(config_.base_url);
        const std::string path = prefix + "/chat/completions";

        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt > 0) {
                const double delay =
                    config_.backoff_initial_s * static_cast<double>(1 << (attempt - 1));
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }

            httplib::Client client(origin);
            client.set_connection_timeout(std::chrono::seconds(config_.timeout_s));
            client.set_read_timeout(std::chrono::seconds(config_.timeout_s));
            client.set_write_timeout(std::chrono::seconds(config_.timeout_s));
            client.set_bearer_token_auth(config_.api_key);

            auto res = client.Post(path, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403)
                throw AuthError("endpoint rejected the API key (HTTP " +
                                std::to_string(res->status) + ")");
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw BackendUnavailable("HTTP " + std::to_string(res->status) + ": " + res->body);
            return extract_content(res->body);
        }
        throw BackendUnavailable("request failed after " + std::to_string(config_.retries + 1) +
                                 " attempts; last error: " + last_error);
    }

private:
    static constexpr int kMaxInFlightCap = 64;

    nlohmann::json request_body(const PromptBundle& prompt) const {
        nlohmann::json messages = nlohmann::json::array();
        messages.push_back({{"role", "system"}, {"content", prompt.system_text}});

        nlohmann::json parts = nlohmann::json::array();
        parts.push_back({{"type", "text"}, {"text", prompt.user_text}});
        for (const auto& [name, path] : prompt.image_refs) {
            std::ifstream in(path, std::ios::binary);
            if (!in) continue;  // missing camera files degrade to a text-only prompt
            std::ostringstream bytes;
            bytes << in.rdbuf();
            const std::string uri = std::string("data:") + detail::mime_for(path) + ";base64," +
                                    detail::base64(std::move(bytes).str());
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", uri}}}});
        }
        if (parts.size() == 1) {
            messages.push_back({{"role", "user"}, {"content", prompt.user_text}});
        } else {
            messages.push_back({{"role", "user"}, {"content", parts}});
        }
        return nlohmann::json{{"model", config_.model}, {"messages", messages}};
    }

    static std::string extract_content(const std::string& body) {
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw MalformedResponse("endpoint returned unparseable JSON");
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw MalformedResponse("endpoint response lacks choices[0].message.content");
        }
    }

    HttpBackendConfig config_;
    std::unique_ptr<std::counting_semaphore<kMaxInFlightCap>> slots_;
};

}  // namespace pla::reasoning
