#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "queryforge/errors.hpp"

namespace queryforge::gen {

class TransportError : public Error {
public:
    using Error::Error;
};

// The transcript has no entry for the requested key.
class ScriptExhausted : public Error {
public:
    using Error::Error;
};

struct ProviderConfig {
    enum class Mode { Http, Scripted };
    Mode mode = Mode::Scripted;
    std::string endpoint;         // http mode: chat-completions URL
    std::string model;
    std::string credential_env;   // name of the env var holding the API key
    std::string transcript_path;  // scripted: replay source; http: recording target
    double temperature = 0.2;
    int max_output_tokens = 10000;
    int max_retries = 3;
    int retry_backoff_ms = 100;
};

struct RequestKey {
    std::string example_id;  // also carries phase slots like "<id>:fp"
    int attempt = 1;
};

struct Message {
    std::string role;
    std::string content;
};

inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

inline std::string digest_messages(const std::vector<Message>& messages) {
    std::string all;
    for (const Message& m : messages) {
        all += m.role;
        all += '\x1f';
        all += m.content;
        all += '\x1e';
    }
    return fnv1a_hex(all);
}

// One chat-completion transport. Scripted mode replays canned responses by
// (example id, attempt) for byte-deterministic end-to-end tests; http mode
// speaks the standard messages-in/choices-out contract with retries, and
// records every exchange into the transcript for later replay.
class Provider {
public:
    explicit Provider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.mode == ProviderConfig::Mode::Scripted) {
            std::ifstream in(cfg_.transcript_path);
            if (!in)
                throw ConfigError("scripted provider requires an existing transcript: " +
                                  cfg_.transcript_path);
            std::string line;
            int lineno = 0;
            while (std::getline(in, line)) {
                ++lineno;
                if (line.empty()) continue;
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(line);
                    std::string id = j.at("key").at("example_id").get<std::string>();
                    int attempt = j.at("key").at("attempt").get<int>();
                    script_[{id, attempt}] = j.at("response").get<std::string>();
                } catch (const nlohmann::json::exception& e) {
                    throw FormatError(std::string("transcript: ") + e.what(), lineno);
                }
            }
        }
    }

    const ProviderConfig& config() const { return cfg_; }

    std::string complete(const RequestKey& key, const std::vector<Message>& messages) {
        std::lock_guard<std::mutex> lock(mutex_);
        if (cfg_.mode == ProviderConfig::Mode::Scripted) {
            auto it = script_.find({key.example_id, key.attempt});
            if (it == script_.end())
                throw ScriptExhausted("no transcript entry for (" + key.example_id + ", attempt " +
                                      std::to_string(key.attempt) + ")");
            return it->second;
        }
        std::string response = http_round_trip(messages);
        record(key, messages, response);
        return response;
    }

private:
    ProviderConfig cfg_;
    std::mutex mutex_;
    std::map<std::pair<std::string, int>, std::string> script_;

    void record(const RequestKey& key, const std::vector<Message>& messages,
                const std::string& response) {
        if (cfg_.transcript_path.empty()) return;
        nlohmann::json j;
        j["key"] = {{"example_id", key.example_id}, {"attempt", key.attempt}};
        j["request_digest"] = digest_messages(messages);
        j["response"] = response;
        std::ofstream out(cfg_.transcript_path, std::ios::app);
        if (!out) throw IoError("cannot append to transcript: " + cfg_.transcript_path);
        out << j.dump() << "\n";
        out.flush();
    }

    std::string http_round_trip(const std::vector<Message>& messages);
};

}  // namespace queryforge::gen

// The HTTP transport lives out of line so that translation units that only
// replay transcripts do not pay for the socket machinery.
#ifndef QUERYFORGE_NO_HTTP
#include <httplib.h>

namespace queryforge::gen {

inline std::string Provider::http_round_trip(const std::vector<Message>& messages) {
    // Split endpoint into base and path.
    std::string endpoint = cfg_.endpoint;
    size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint must be a http(s) URL");
    size_t path_start = endpoint.find('/', scheme + 3);
    std::string base = path_start == std::string::npos ? endpoint : endpoint.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);

    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["max_tokens"] = cfg_.max_output_tokens;
    nlohmann::json msgs = nlohmann::json::array();
    for (const Message& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = msgs;

    httplib::Headers headers;
    if (!cfg_.credential_env.empty()) {
        const char* key = std::getenv(cfg_.credential_env.c_str());
        if (!key)
            throw ConfigError("credential environment variable not set: " + cfg_.credential_env);
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error;
    for (int attempt = 0; attempt < cfg_.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg_.retry_backoff_ms * (1 << (attempt - 1))));
        httplib::Client client(base);
        client.set_read_timeout(60, 0);
        httplib::Result res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "transient status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw TransportError("provider returned status " + std::to_string(res->status) + ": " +
                                 res->body);
        try {
            nlohmann::json j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed provider response: ") + e.what());
        }
    }
    throw TransportError("provider unreachable after " + std::to_string(cfg_.max_retries) +
                         " attempts: " + last_error);
}

}  // namespace queryforge::gen
#endif  // QUERYFORGE_NO_HTTP
