#pragma once

// Minimal hosted-model HTTP client. Kept in its own header so the socket
// machinery is only compiled into binaries that actually talk to a network.

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "recap/backends.hpp"
#include "recap/errors.hpp"

namespace recap {

// POSTs {"model", "prompt"} as JSON to endpoint_url and accepts either a
// top-level {"text": ...} or a completions-style {"choices":[{"text": ...}]}
// reply. The credential is sent as a bearer token.
class HttpLLMClient : public LLMClient {
public:
    HttpLLMClient(std::string endpoint_url, std::string api_key, std::string model_id,
                  int max_context_tokens = 128000, int timeout_ms = 30000)
        : model_id_(std::move(model_id)), max_context_(max_context_tokens) {
        const auto path_pos = endpoint_url.find('/', endpoint_url.find("//") + 2);
        host_ = path_pos == std::string::npos ? endpoint_url : endpoint_url.substr(0, path_pos);
        path_ = path_pos == std::string::npos ? "/" : endpoint_url.substr(path_pos);
        headers_ = {{"Authorization", "Bearer " + api_key}};
        timeout_ms_ = timeout_ms;
    }

    std::string model_id() const override { return model_id_; }
    int max_context_tokens() const override { return max_context_; }

    std::string complete(const std::string& prompt) override {
        httplib::Client client(host_);
        client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        nlohmann::json body{{"model", model_id_}, {"prompt", prompt}};
        auto res = client.Post(path_, headers_, body.dump(), "application/json");
        if (!res) fail("BackendUnavailable", "no response from " + host_ + path_);
        if (res->status != 200)
            fail("BackendUnavailable", "endpoint returned HTTP " + std::to_string(res->status));
        nlohmann::json j = nlohmann::json::parse(res->body);
        if (j.contains("text")) return j.at("text").get<std::string>();
        if (j.contains("choices") && !j.at("choices").empty())
            return j.at("choices").front().value("text", std::string{});
        fail("BackendUnavailable", "endpoint reply carries no completion text");
    }

private:
    std::string model_id_;
    std::string host_;
    std::string path_;
    httplib::Headers headers_;
    int max_context_;
    int timeout_ms_;
};

}  // namespace recap
