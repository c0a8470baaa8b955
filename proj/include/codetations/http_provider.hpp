#pragma once

// Completion provider that POSTs the request as JSON to an HTTP endpoint and
// reads back {"text": "..."} (or a plain-text body). Plain http only.

#include <memory>
#include <string>

#include "httplib.h"

#include "codetations/config.hpp"
#include "codetations/provider.hpp"

namespace codetations {

class HttpProvider final : public CompletionProvider {
 public:
  HttpProvider(std::string endpoint, std::string key) : key_(std::move(key)) {
    const std::string scheme = "http://";
    if (endpoint.rfind(scheme, 0) != 0) {
      throw PreconditionError("provider endpoint must start with http://: " + endpoint);
    }
    const auto slash = endpoint.find('/', scheme.size());
    host_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
  }

  std::string complete(const CompletionRequest& request) override {
    httplib::Client client(host_);
    client.set_connection_timeout(5);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
    auto res = client.Post(path_, headers, to_json(request).dump(), "application/json");
    if (!res) {
      throw ProviderError("provider request to " + host_ + path_ + " failed: " +
                          httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw ProviderError("provider returned HTTP " + std::to_string(res->status));
    }
    auto body = json::parse(res->body, nullptr, false);
    if (!body.is_discarded() && body.is_object()) {
      auto text = body.find("text");
      if (text == body.end() || !text->is_string()) {
        throw ProviderError("provider response has no string 'text' field");
      }
      return text->get<std::string>();
    }
    return res->body;
  }

  [[nodiscard]] std::string name() const override { return "http"; }

 private:
  std::string host_;
  std::string path_;
  std::string key_;
};

/// Builds the provider named by `settings`; nullptr for none.
inline std::shared_ptr<CompletionProvider> make_provider(const ProviderSettings& settings) {
  const std::string& name = settings.name;
  if (name.empty() || name == "none") {
    if (name.empty() && !settings.endpoint.empty()) {
      return std::make_shared<HttpProvider>(settings.endpoint, settings.key);
    }
    return nullptr;
  }
  if (name == "mock") {
    std::vector<std::string> replies;
    if (!settings.mock_script.empty()) {
      auto j = json::parse(read_file_bytes(settings.mock_script));
      if (!j.is_array()) throw PreconditionError("mock script must be a JSON array of strings");
      for (const auto& r : j) replies.push_back(r.get<std::string>());
    }
    return std::make_shared<ScriptedProvider>(std::move(replies));
  }
  if (name == "http") {
    if (settings.endpoint.empty()) {
      throw PreconditionError("http provider needs CODETATIONS_PROVIDER_ENDPOINT or a config endpoint");
    }
    return std::make_shared<HttpProvider>(settings.endpoint, settings.key);
  }
  throw PreconditionError("unknown provider '" + name + "' (expected none, mock or http)");
}

}  // namespace codetations
