#pragma once

// The host process: owns document text and annotation state for one
// repository and exposes the annotation-type API (annotation data, document
// text, completions) plus re-anchoring to rendering clients.
//
// Requests on one path are serialized through that path's mutex; requests on
// different paths run concurrently. Events are fanned out to subscribers
// while the path lock is held, so each subscriber sees a document's events in
// order. Event sinks must not call back into the service.

#include <atomic>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "codetations/config.hpp"
#include "codetations/edit_tracking.hpp"
#include "codetations/layers.hpp"
#include "codetations/provider.hpp"
#include "codetations/reanchoring.hpp"
#include "codetations/store.hpp"

namespace codetations {

inline constexpr std::string_view kLmUnitTestType = "lm-unit-test";

struct ServiceOptions {
  StoreRoot root;
  ReattachConfig reattach;
  std::shared_ptr<CompletionProvider> provider;  // may be null
};

struct LmUnitTestResult {
  bool pass = false;
  std::optional<std::string> suggestion;
};

struct SetTextResult {
  std::string digest;
  std::vector<AnchorUpdate> updates;
  std::vector<TagRecord> annotations;
};

inline json anchor_json(Anchor a) { return json{{"start", a.start.value}, {"end", a.end.value}}; }

inline json to_json(const AnchorUpdate& u) {
  return json{{"tagId", u.tag_id},
              {"anchor", anchor_json(u.new_anchor)},
              {"outcome", std::string(to_string(u.outcome))}};
}

inline json tags_json(const std::vector<TagRecord>& tags) {
  json arr = json::array();
  for (const auto& t : tags) arr.push_back(to_json(t));
  return arr;
}

inline EditOperation edit_from_json(const json& j) {
  if (!j.is_object()) throw PreconditionError("edit must be an object");
  EditOperation e;
  e.position = {detail::require_offset(j, "position", "edit")};
  e.deleted_length = j.contains("deletedLength") ? detail::require_offset(j, "deletedLength", "edit") : 0;
  e.inserted_text = j.contains("insertedText") ? detail::require_string(j, "insertedText", "edit") : "";
  return e;
}

inline json to_json(const EditOperation& e) {
  return json{{"position", e.position.value},
              {"deletedLength", e.deleted_length},
              {"insertedText", e.inserted_text}};
}

class HostService {
 public:
  using EventSink = std::function<void(const json&)>;
  using SubscriberId = std::uint64_t;

  explicit HostService(ServiceOptions options) : opts_(std::move(options)) { opts_.reattach.validate(); }

  HostService(const HostService&) = delete;
  HostService& operator=(const HostService&) = delete;

  [[nodiscard]] const StoreRoot& root() const { return opts_.root; }
  [[nodiscard]] bool has_provider() const { return opts_.provider != nullptr; }

  SubscriberId subscribe(EventSink sink) {
    std::lock_guard lock(subs_mu_);
    const SubscriberId id = next_subscriber_++;
    subscribers_.emplace(id, std::move(sink));
    return id;
  }

  void unsubscribe(SubscriberId id) {
    std::lock_guard lock(subs_mu_);
    subscribers_.erase(id);
  }

  // -------------------------------------------------------------------------
  // Typed operations

  std::vector<TagRecord> list_annotations(const std::string& path) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    return slot->file ? slot->file->annotations : std::vector<TagRecord>{};
  }

  std::vector<ReattachProposal> pending_proposals(const std::string& path) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    return slot->proposals;
  }

  TagRecord add_annotation(const std::string& path, Anchor anchor, std::string annotation_type,
                           json data) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    sync_with_disk(*slot);
    TagRecord tag = make_tag(slot->text, anchor, std::move(annotation_type), std::move(data));
    AnnotationFile file = slot->file.value_or(AnnotationFile{kFormatVersion, {path, slot->digest}, {}, json::object()});
    file.document.digest = slot->digest;
    file.annotations.push_back(tag);
    persist(*slot, std::move(file));
    emit_annotations_changed(*slot);
    return tag;
  }

  TagRecord move_annotation(const std::string& path, const std::string& tag_id, Anchor anchor) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    sync_with_disk(*slot);
    AnnotationFile file = require_file(*slot);
    TagRecord* tag = require_tag(file, tag_id);
    if (anchor.start > anchor.end) throw PreconditionError("anchor start after end");
    if (anchor.end.value > slot->text.size()) throw PreconditionError("anchor out of bounds");
    tag->anchor = anchor;
    tag->context = capture_context(slot->text, anchor);
    tag->status = TagStatus::attached;
    TagRecord moved = *tag;
    drop_proposals(*slot, {tag_id});
    persist(*slot, std::move(file));
    emit_annotations_changed(*slot);
    return moved;
  }

  void remove_annotation(const std::string& path, const std::string& tag_id) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    AnnotationFile file = require_file(*slot);
    require_tag(file, tag_id);
    std::erase_if(file.annotations, [&](const TagRecord& t) { return t.id == tag_id; });
    drop_proposals(*slot, {tag_id});
    persist(*slot, std::move(file));
    emit_annotations_changed(*slot);
  }

  json get_annotation_data(const std::string& tag_id, std::optional<std::string> path = {}) {
    auto slot = slot_for(resolve_tag_path(tag_id, path));
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    return require_tag(require_file(*slot), tag_id)->data;
  }

  void set_annotation_data(const std::string& tag_id, json data, std::optional<std::string> path = {}) {
    auto slot = slot_for(resolve_tag_path(tag_id, path));
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    AnnotationFile file = require_file(*slot);
    require_tag(file, tag_id)->data = std::move(data);
    persist(*slot, std::move(file));
    emit_annotations_changed(*slot);
  }

  std::string get_document_text(const std::string& path) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    return encode_utf8(slot->text);
  }

  /// Applies `edits` (sequential semantics) to the document and every tag on
  /// it, writes the file and the sidecar.
  SetTextResult set_document_text(const std::string& path, const std::vector<EditOperation>& edits) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    sync_with_disk(*slot);
    AnnotationFile file = slot->file.value_or(AnnotationFile{kFormatVersion, {path, slot->digest}, {}, json::object()});
    BatchResult batch = apply_edit_batch(file, edits, slot->text);
    write_file_atomic(opts_.root.source_file(path), encode_utf8(batch.final_text));
    slot->text = std::move(batch.final_text);
    slot->digest = batch.file.document.digest;
    slot->proposals.clear();
    if (slot->file) {
      persist(*slot, std::move(batch.file));
    }
    SetTextResult result{slot->digest, std::move(batch.updates),
                         slot->file ? slot->file->annotations : std::vector<TagRecord>{}};
    json updates = json::array();
    for (const auto& u : result.updates) updates.push_back(to_json(u));
    emit(*slot, "documentChanged",
         {{"digest", slot->digest}, {"updates", updates}, {"annotations", tags_json(result.annotations)}});
    return result;
  }

  std::string llm_complete(const CompletionRequest& request) {
    if (!opts_.provider) throw ProviderError("provider unavailable");
    return opts_.provider->complete(request);
  }

  /// Re-reads `path` from disk and stages a proposal for every tag whose
  /// anchor text no longer sits at its offsets. Nothing is persisted.
  std::vector<ReattachProposal> notify_external_change(const std::string& path,
                                                       Strategy strategy = Strategy::fuzzy) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    reload_text(*slot);
    slot->proposals.clear();
    slot->cancel = false;
    if (!slot->file || slot->file->document.digest == slot->digest) return {};

    const std::string scored_digest = slot->digest;
    std::vector<ReattachProposal> proposals;
    std::vector<json> orphan_events;
    for (const auto& tag : slot->file->annotations) {
      if (tag.status == TagStatus::attached && anchor_matches(tag, slot->text)) continue;
      if (slot->cancel) throw StaleError("reattachment of " + path + " was cancelled");
      if (tag.context.anchor_text.empty()) {
        orphan_events.push_back({{"tagId", tag.id}, {"proposal", nullptr}, {"bestScore", 0.0}});
        continue;
      }
      ReattachResult result;
      if (strategy == Strategy::semantic && opts_.provider) {
        result = semantic_reattach(tag, slot->text, opts_.provider.get(), opts_.reattach);
      } else {
        result = reattach(tag, slot->text, opts_.reattach, strategy != Strategy::exact);
      }
      if (auto* p = std::get_if<ReattachProposal>(&result)) {
        proposals.push_back(*p);
        orphan_events.push_back({{"tagId", tag.id}, {"proposal", to_json(*p)}, {"bestScore", p->score}});
      } else {
        const auto& o = std::get<Orphaned>(result);
        orphan_events.push_back({{"tagId", tag.id}, {"proposal", nullptr}, {"bestScore", o.best_score}});
      }
    }
    // Results computed against a version that is already gone are useless.
    if (source_digest(path, opts_.root) != scored_digest) {
      throw StaleError(path + " changed again during reattachment; retry");
    }
    slot->proposals = proposals;
    for (auto& payload : orphan_events) emit(*slot, "orphanDetected", std::move(payload));
    return proposals;
  }

  /// Stops an in-progress notify_external_change on `path` before its next
  /// provider call.
  void cancel_reattach(const std::string& path) { slot_for(path)->cancel = true; }

  /// Confirms staged proposals (all of them when `tag_ids` is empty) and
  /// persists. With nothing staged this re-describes the sidecar against the
  /// current text: tags that still match stay attached, the rest are orphaned.
  std::vector<TagRecord> confirm_proposals(const std::string& path, const std::vector<std::string>& tag_ids) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    if (source_digest(path, opts_.root) != slot->digest) {
      throw StaleError(path + " changed since proposals were computed; run notify_external_change again");
    }
    AnnotationFile file = require_file(*slot);
    std::vector<std::string> ids = tag_ids;
    if (ids.empty()) {
      for (const auto& p : slot->proposals) ids.push_back(p.tag_id);
    }
    for (const auto& id : ids) {
      auto it = std::find_if(slot->proposals.begin(), slot->proposals.end(),
                             [&](const ReattachProposal& p) { return p.tag_id == id; });
      if (it == slot->proposals.end()) throw NotFoundError("no pending proposal for tag " + id);
    }
    file = reconcile(file, slot->text);
    for (const auto& id : ids) {
      auto it = std::find_if(slot->proposals.begin(), slot->proposals.end(),
                             [&](const ReattachProposal& p) { return p.tag_id == id; });
      ReattachProposal accepted = *it;
      accepted.accepted = true;
      file = confirm(accepted, file, slot->text);
    }
    drop_proposals(*slot, std::set<std::string>(ids.begin(), ids.end()));
    for (const auto& p : slot->proposals) {
      if (auto* t = file.find(p.tag_id); t && t->status != TagStatus::attached) t->status = TagStatus::proposed;
    }
    persist(*slot, std::move(file));
    emit_annotations_changed(*slot);
    return slot->file->annotations;
  }

  void reject_proposals(const std::string& path, const std::vector<std::string>& tag_ids) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    if (tag_ids.empty()) {
      slot->proposals.clear();
    } else {
      drop_proposals(*slot, std::set<std::string>(tag_ids.begin(), tag_ids.end()));
    }
  }

  Freshness check(const std::string& path) {
    auto slot = slot_for(path);
    std::lock_guard lock(slot->mu);
    return codetations::check(path, opts_.root);
  }

  /// Asks the provider the tag's yes/no question about its anchored code. The
  /// reply's first line must be YES or NO; after NO the rest is a suggested
  /// replacement for the anchored text. The result lands in data.lastResult.
  LmUnitTestResult run_lm_unit_test(const std::string& tag_id, std::optional<std::string> path = {}) {
    auto slot = slot_for(resolve_tag_path(tag_id, path));
    std::lock_guard lock(slot->mu);
    ensure_loaded(*slot);
    AnnotationFile file = require_file(*slot);
    TagRecord* tag = require_tag(file, tag_id);
    if (tag->annotation_type != kLmUnitTestType) {
      throw PreconditionError("tag " + tag_id + " is not an lm-unit-test annotation");
    }
    if (!tag->data.is_object() || !tag->data.contains("question") || !tag->data["question"].is_string()) {
      throw PreconditionError("tag " + tag_id + " has no 'question' in its data");
    }
    if (!opts_.provider) throw ProviderError("provider unavailable");

    const std::string question = tag->data["question"].get<std::string>();
    CompletionRequest request{lm_unit_test_instructions(question), encode_utf8(slot->text), tag->context};
    std::string reply = opts_.provider->complete(request);

    json last;
    std::optional<LmUnitTestResult> parsed = parse_yes_no(reply);
    if (parsed) {
      last = {{"pass", parsed->pass}, {"documentDigest", slot->digest}};
      if (parsed->suggestion) last["suggestion"] = *parsed->suggestion;
    } else {
      last = {{"error", "malformed provider reply: first line must be YES or NO"},
              {"reply", reply},
              {"documentDigest", slot->digest}};
    }
    tag->data["lastResult"] = last;
    persist(*slot, std::move(file));
    emit_annotations_changed(*slot);
    if (!parsed) throw ProviderError("malformed provider reply for lm-unit-test " + tag_id);
    return *parsed;
  }

  /// Paths whose on-disk bytes differ from the text the service holds get a
  /// notify_external_change (fuzzy). Used by the server's polling watcher.
  std::vector<std::string> poll_external_changes() {
    std::vector<std::string> paths;
    {
      std::lock_guard lock(docs_mu_);
      for (const auto& [p, slot] : slots_) paths.push_back(p);
    }
    std::vector<std::string> changed;
    for (const auto& p : paths) {
      auto slot = slot_for(p);
      std::string held;
      {
        std::lock_guard lock(slot->mu);
        if (!slot->loaded) continue;
        held = slot->digest;
      }
      std::string now;
      try {
        now = source_digest(p, opts_.root);
      } catch (const StoreError&) {
        continue;
      }
      if (now != held) {
        try {
          notify_external_change(p);
          changed.push_back(p);
        } catch (const Error&) {
        }
      }
    }
    return changed;
  }

  // -------------------------------------------------------------------------
  // Wire dispatch

  /// Handles one request object and returns exactly one response carrying
  /// its requestId. Never throws.
  json handle(const json& request) {
    json id = nullptr;
    try {
      if (!request.is_object()) return error_response(id, "bad_request", "request must be a JSON object");
      if (auto it = request.find("requestId"); it != request.end()) id = *it;
      auto op_it = request.find("op");
      if (op_it == request.end() || !op_it->is_string()) {
        return error_response(id, "bad_request", "missing string field 'op'");
      }
      return ok_response(id, dispatch(op_it->get<std::string>(), request));
    } catch (const PathError& e) {
      return error_response(id, "path", e.what());
    } catch (const NotFoundError& e) {
      return error_response(id, "not_found", e.what());
    } catch (const StaleError& e) {
      return error_response(id, "stale", e.what());
    } catch (const ProviderError& e) {
      return error_response(id, std::string(e.what()) == "provider unavailable" ? "provider_unavailable"
                                                                                 : "provider_error",
                            e.what());
    } catch (const StoreError& e) {
      return error_response(id, "store", e.what());
    } catch (const PreconditionError& e) {
      return error_response(id, "precondition", e.what());
    } catch (const UnknownOp& e) {
      return error_response(id, "unknown_op", e.what());
    } catch (const json::exception& e) {
      return error_response(id, "bad_request", e.what());
    } catch (const std::exception& e) {
      return error_response(id, "internal", e.what());
    }
  }

  static std::string lm_unit_test_instructions(const std::string& question) {
    return "Answer the question about the annotated region (the anchor text in the anchor "
           "context) of the document. Reply with YES or NO on the first line. If the answer is NO, "
           "put the replacement text for the annotated region that would make the answer YES on "
           "the following lines.\nQuestion: " +
           question;
  }

  static std::optional<LmUnitTestResult> parse_yes_no(const std::string& reply) {
    const auto nl = reply.find('\n');
    std::string first = reply.substr(0, nl);
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    first.erase(first.begin(), std::find_if(first.begin(), first.end(), not_space));
    first.erase(std::find_if(first.rbegin(), first.rend(), not_space).base(), first.end());
    for (auto& c : first) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (first == "YES") return LmUnitTestResult{true, std::nullopt};
    if (first == "NO") {
      LmUnitTestResult r{false, std::nullopt};
      if (nl != std::string::npos && nl + 1 < reply.size()) r.suggestion = reply.substr(nl + 1);
      return r;
    }
    return std::nullopt;
  }

 private:
  struct UnknownOp : std::runtime_error {
    using std::runtime_error::runtime_error;
  };

  struct DocSlot {
    explicit DocSlot(std::string p) : path(std::move(p)) {}
    std::string path;
    std::mutex mu;
    bool loaded = false;
    Text text;
    std::string digest;
    std::optional<AnnotationFile> file;
    std::vector<ReattachProposal> proposals;
    std::atomic<bool> cancel{false};
  };

  std::shared_ptr<DocSlot> slot_for(const std::string& path) {
    check_repo_path(path);
    std::lock_guard lock(docs_mu_);
    auto& slot = slots_[path];
    if (!slot) slot = std::make_shared<DocSlot>(path);
    return slot;
  }

  void reload_text(DocSlot& slot) {
    const fs::path source = opts_.root.source_file(slot.path);
    std::error_code ec;
    if (!fs::is_regular_file(source, ec)) throw NotFoundError("unknown path " + slot.path);
    const std::string bytes = read_file_bytes(source);
    try {
      slot.text = decode_utf8(bytes);
    } catch (const PreconditionError& e) {
      throw PreconditionError(slot.path + ": " + e.what());
    }
    slot.digest = sha256_hex(bytes);
  }

  void ensure_loaded(DocSlot& slot) {
    if (slot.loaded) return;
    reload_text(slot);
    slot.file = load(slot.path, opts_.root);
    if (slot.file) index_tags(*slot.file);
    slot.loaded = true;
  }

  // Mutations that address offsets need the sidecar to describe the text the
  // service holds.
  static void require_current(const DocSlot& slot) {
    if (slot.file && slot.file->document.digest != slot.digest) {
      throw StaleError(slot.path + " has annotations for a different version of the file; confirm or "
                                   "reject re-anchor proposals first");
    }
  }

  // Offsets in a request refer to the file as it is on disk. An unannotated
  // file is simply re-read; an annotated one has to be re-anchored first.
  void sync_with_disk(DocSlot& slot) {
    if (source_digest(slot.path, opts_.root) != slot.digest) {
      if (slot.file && !slot.file->annotations.empty()) {
        throw StaleError(slot.path + " changed on disk; run notify_external_change first");
      }
      reload_text(slot);
    }
    require_current(slot);
  }

  static AnnotationFile require_file(const DocSlot& slot) {
    if (!slot.file) throw NotFoundError("no annotations for " + slot.path);
    return *slot.file;
  }

  static TagRecord* require_tag(AnnotationFile& file, const std::string& tag_id) {
    TagRecord* t = file.find(tag_id);
    if (!t) throw NotFoundError("no tag " + tag_id + " in " + file.document.path);
    return t;
  }

  static const TagRecord* require_tag(const AnnotationFile& file, const std::string& tag_id) {
    const TagRecord* t = file.find(tag_id);
    if (!t) throw NotFoundError("no tag " + tag_id + " in " + file.document.path);
    return t;
  }

  static void drop_proposals(DocSlot& slot, const std::set<std::string>& ids) {
    std::erase_if(slot.proposals, [&](const ReattachProposal& p) { return ids.count(p.tag_id) > 0; });
  }

  void persist(DocSlot& slot, AnnotationFile file) {
    sort_annotations(file);
    save(file, opts_.root);
    index_tags(file);
    slot.file = std::move(file);
  }

  void index_tags(const AnnotationFile& file) {
    std::lock_guard lock(docs_mu_);
    for (const auto& t : file.annotations) tag_paths_[t.id] = file.document.path;
  }

  std::string resolve_tag_path(const std::string& tag_id, const std::optional<std::string>& path) {
    if (path) return *path;
    {
      std::lock_guard lock(docs_mu_);
      if (auto it = tag_paths_.find(tag_id); it != tag_paths_.end()) return it->second;
    }
    for (const auto& source : list_sidecars(opts_.root)) {
      auto file = load(source, opts_.root);
      if (file && file->find(tag_id)) {
        index_tags(*file);
        return source;
      }
    }
    throw NotFoundError("no tag " + tag_id + " in this repository");
  }

  void emit(const DocSlot& slot, const std::string& name, json payload) {
    const json event{{"event", name}, {"path", slot.path}, {"payload", std::move(payload)}};
    std::lock_guard lock(subs_mu_);
    for (auto& [id, sink] : subscribers_) {
      try {
        sink(event);
      } catch (...) {
      }
    }
  }

  void emit_annotations_changed(const DocSlot& slot) {
    emit(slot, "annotationsChanged",
         {{"digest", slot.file ? slot.file->document.digest : slot.digest},
          {"annotations", slot.file ? tags_json(slot.file->annotations) : json::array()}});
  }

  static json ok_response(const json& id, json result) {
    return json{{"requestId", id}, {"ok", true}, {"result", std::move(result)}};
  }

  static json error_response(const json& id, const std::string& code, const std::string& message) {
    return json{{"requestId", id}, {"ok", false}, {"error", {{"code", code}, {"message", message}}}};
  }

  static std::string str_param(const json& r, const char* key) {
    return detail::require_string(r, key, "request");
  }

  static std::optional<std::string> opt_path(const json& r) {
    if (auto it = r.find("path"); it != r.end() && it->is_string()) return it->get<std::string>();
    return std::nullopt;
  }

  static std::vector<std::string> id_list(const json& r, const char* key) {
    std::vector<std::string> out;
    if (auto it = r.find(key); it != r.end()) {
      if (!it->is_array()) throw PreconditionError(std::string("'") + key + "' must be an array");
      for (const auto& v : *it) out.push_back(v.get<std::string>());
    }
    return out;
  }

  json dispatch(const std::string& op, const json& r) {
    if (op == "list_annotations") {
      const auto path = str_param(r, "path");
      json proposals = json::array();
      auto tags = list_annotations(path);
      for (const auto& p : pending_proposals(path)) proposals.push_back(to_json(p));
      return {{"path", path}, {"annotations", tags_json(tags)}, {"pendingProposals", proposals}};
    }
    if (op == "add_annotation") {
      const auto anchor = make_anchor(detail::require_offset(r, "start", "request"),
                                      detail::require_offset(r, "end", "request"));
      return to_json(add_annotation(str_param(r, "path"), anchor, str_param(r, "annotationType"),
                                    r.value("data", json(nullptr))));
    }
    if (op == "move_annotation") {
      const auto anchor = make_anchor(detail::require_offset(r, "start", "request"),
                                      detail::require_offset(r, "end", "request"));
      return to_json(move_annotation(str_param(r, "path"), str_param(r, "tagId"), anchor));
    }
    if (op == "remove_annotation") {
      remove_annotation(str_param(r, "path"), str_param(r, "tagId"));
      return json::object();
    }
    if (op == "get_annotation_data") {
      return {{"data", get_annotation_data(str_param(r, "tagId"), opt_path(r))}};
    }
    if (op == "set_annotation_data") {
      set_annotation_data(str_param(r, "tagId"), r.value("data", json(nullptr)), opt_path(r));
      return json::object();
    }
    if (op == "get_document_text") {
      const auto path = str_param(r, "path");
      auto text = get_document_text(path);
      return {{"path", path}, {"text", text}, {"digest", sha256_hex(text)}};
    }
    if (op == "set_document_text") {
      std::vector<EditOperation> edits;
      const json& arr = detail::require(r, "edits", "request");
      if (!arr.is_array()) throw PreconditionError("'edits' must be an array");
      for (const auto& e : arr) edits.push_back(edit_from_json(e));
      auto res = set_document_text(str_param(r, "path"), edits);
      json updates = json::array();
      for (const auto& u : res.updates) updates.push_back(to_json(u));
      return {{"digest", res.digest}, {"updates", updates}, {"annotations", tags_json(res.annotations)}};
    }
    if (op == "llm_complete") {
      return {{"text", llm_complete(completion_request_from_json(r.value("request", json::object())))}};
    }
    if (op == "notify_external_change") {
      Strategy strategy = Strategy::fuzzy;
      if (auto it = r.find("strategy"); it != r.end()) {
        auto s = parse_strategy(it->get<std::string>());
        if (!s) throw PreconditionError("strategy must be exact, fuzzy or semantic");
        strategy = *s;
      }
      if (strategy == Strategy::semantic && !opts_.provider) throw ProviderError("provider unavailable");
      json arr = json::array();
      for (const auto& p : notify_external_change(str_param(r, "path"), strategy)) arr.push_back(to_json(p));
      return {{"proposals", arr}};
    }
    if (op == "cancel_reattach") {
      cancel_reattach(str_param(r, "path"));
      return json::object();
    }
    if (op == "confirm_proposals") {
      return {{"annotations", tags_json(confirm_proposals(str_param(r, "path"), id_list(r, "tagIds")))}};
    }
    if (op == "reject_proposals") {
      reject_proposals(str_param(r, "path"), id_list(r, "tagIds"));
      return json::object();
    }
    if (op == "check") {
      return {{"state", std::string(to_string(check(str_param(r, "path"))))}};
    }
    if (op == "run_lm_unit_test") {
      auto res = run_lm_unit_test(str_param(r, "tagId"), opt_path(r));
      json out{{"pass", res.pass}};
      out["suggestion"] = res.suggestion ? json(*res.suggestion) : json(nullptr);
      return out;
    }
    if (op == "list_documents") {
      return {{"paths", list_sidecars(opts_.root)}};
    }
    if (op.rfind("ext.", 0) == 0) throw UnknownOp("extension op '" + op + "' is reserved and not implemented");
    throw UnknownOp("unknown op '" + op + "'");
  }

  ServiceOptions opts_;
  std::mutex docs_mu_;
  std::map<std::string, std::shared_ptr<DocSlot>> slots_;
  std::map<std::string, std::string> tag_paths_;
  std::mutex subs_mu_;
  std::map<SubscriberId, EventSink> subscribers_;
  SubscriberId next_subscriber_ = 1;
};

}  // namespace codetations
