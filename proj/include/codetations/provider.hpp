#pragma once

// Completion provider contract. The engine only ever sends a request
// (instructions, document, cached anchor context) and gets text back; a
// provider failure is reported as ProviderError and never touches engine
// state.

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "codetations/model.hpp"

namespace codetations {

struct CompletionRequest {
  std::string instructions;
  std::string document;
  AnchorContext anchor_context;
};

inline json to_json(const CompletionRequest& r) {
  return json{{"instructions", r.instructions},
              {"document", r.document},
              {"anchorContext",
               {{"anchorText", r.anchor_context.anchor_text},
                {"prefix", r.anchor_context.prefix},
                {"suffix", r.anchor_context.suffix}}}};
}

inline CompletionRequest completion_request_from_json(const json& j) {
  CompletionRequest r;
  r.instructions = j.value("instructions", std::string{});
  r.document = j.value("document", std::string{});
  if (auto it = j.find("anchorContext"); it != j.end() && it->is_object()) {
    r.anchor_context.anchor_text = it->value("anchorText", std::string{});
    r.anchor_context.prefix = it->value("prefix", std::string{});
    r.anchor_context.suffix = it->value("suffix", std::string{});
  }
  return r;
}

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  /// Returns the completion text or throws ProviderError.
  virtual std::string complete(const CompletionRequest& request) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Replays a fixed list of replies in order; throws once they run out.
/// Every request is recorded for inspection.
class ScriptedProvider final : public CompletionProvider {
 public:
  ScriptedProvider() = default;
  explicit ScriptedProvider(std::vector<std::string> replies)
      : replies_(replies.begin(), replies.end()) {}

  void push(std::string reply) {
    std::lock_guard lock(mu_);
    replies_.push_back(std::move(reply));
  }

  std::string complete(const CompletionRequest& request) override {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (replies_.empty()) throw ProviderError("scripted provider: no scripted reply left");
    std::string reply = std::move(replies_.front());
    replies_.pop_front();
    return reply;
  }

  [[nodiscard]] std::string name() const override { return "mock"; }

  [[nodiscard]] std::vector<CompletionRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::string> replies_;
  std::vector<CompletionRequest> requests_;
};

/// Wraps a callable; handy for mocks that inspect the request.
class FunctionProvider final : public CompletionProvider {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit FunctionProvider(Fn fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}

  std::string complete(const CompletionRequest& request) override { return fn_(request); }
  [[nodiscard]] std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

}  // namespace codetations
