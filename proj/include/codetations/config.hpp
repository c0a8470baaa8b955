#pragma once

// `.codetations/config.json`:
//
//   {
//     "reattach": {"weightAnchor": 0.6, "weightPrefix": 0.2, "weightSuffix": 0.2,
//                  "threshold": 0.65, "maxWindowSlack": 8},
//     "provider": {"name": "http", "endpoint": "http://127.0.0.1:8080/complete"}
//   }
//
// Every key is optional. CODETATIONS_PROVIDER_ENDPOINT and
// CODETATIONS_PROVIDER_KEY override the provider endpoint and key.

#include <cstdlib>
#include <optional>
#include <string>

#include "codetations/reanchoring.hpp"
#include "codetations/store.hpp"

namespace codetations {

inline constexpr std::string_view kConfigFileName = "config.json";

struct ProviderSettings {
  std::string name;  // "", "none", "mock", "http"
  std::string endpoint;
  std::string key;
  std::string mock_script;  // path to a JSON array of scripted replies
};

struct Config {
  ReattachConfig reattach;
  ProviderSettings provider;
};

inline ReattachConfig reattach_config_from_json(const json& j, ReattachConfig base = {}) {
  if (!j.is_object()) throw PreconditionError("reattach config must be an object");
  base.weight_anchor = j.value("weightAnchor", base.weight_anchor);
  base.weight_prefix = j.value("weightPrefix", base.weight_prefix);
  base.weight_suffix = j.value("weightSuffix", base.weight_suffix);
  base.threshold = j.value("threshold", base.threshold);
  base.max_window_slack = j.value("maxWindowSlack", base.max_window_slack);
  base.validate();
  return base;
}

inline json to_json(const ReattachConfig& c) {
  return json{{"weightAnchor", c.weight_anchor},
              {"weightPrefix", c.weight_prefix},
              {"weightSuffix", c.weight_suffix},
              {"threshold", c.threshold},
              {"maxWindowSlack", c.max_window_slack}};
}

inline Config load_config(const StoreRoot& root) {
  Config config;
  const fs::path path = root.store_dir / std::string(kConfigFileName);
  std::error_code ec;
  if (fs::exists(path, ec)) {
    json j;
    try {
      j = json::parse(read_file_bytes(path));
      if (auto it = j.find("reattach"); it != j.end()) {
        config.reattach = reattach_config_from_json(*it, config.reattach);
      }
      if (auto it = j.find("provider"); it != j.end() && it->is_object()) {
        config.provider.name = it->value("name", std::string{});
        config.provider.endpoint = it->value("endpoint", std::string{});
        config.provider.mock_script = it->value("mockScript", std::string{});
      }
    } catch (const json::exception& e) {
      throw StoreError("malformed config " + path.string() + ": " + e.what());
    } catch (const PreconditionError& e) {
      throw StoreError("invalid config " + path.string() + ": " + e.what());
    }
  }
  if (const char* endpoint = std::getenv("CODETATIONS_PROVIDER_ENDPOINT"); endpoint && *endpoint) {
    config.provider.endpoint = endpoint;
  }
  if (const char* key = std::getenv("CODETATIONS_PROVIDER_KEY"); key && *key) config.provider.key = key;
  return config;
}

}  // namespace codetations
