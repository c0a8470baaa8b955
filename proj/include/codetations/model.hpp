#pragma once

// Annotation data model shared by every other module: offsets, anchors,
// cached anchor context, tag records, edit operations and annotation files.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "codetations/digest.hpp"
#include "codetations/errors.hpp"
#include "codetations/text.hpp"
#include "codetations/uuid.hpp"

namespace codetations {

using json = nlohmann::json;

// Number of scalar values cached on each side of an anchor.
inline constexpr std::size_t kContextWindow = 64;

inline constexpr int kFormatVersion = 1;

/// Position in a document, counted in Unicode scalar values from the start.
struct DocOffset {
  std::size_t value = 0;

  friend auto operator<=>(const DocOffset&, const DocOffset&) = default;
};

/// Half-open range [start, end).
struct Anchor {
  DocOffset start;
  DocOffset end;

  [[nodiscard]] bool empty() const { return start.value >= end.value; }
  [[nodiscard]] std::size_t length() const { return empty() ? 0 : end.value - start.value; }

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

inline Anchor make_anchor(std::size_t start, std::size_t end) { return Anchor{{start}, {end}}; }

struct DocumentRef {
  std::string path;    // repo-relative, forward slashes
  std::string digest;  // sha256 of raw bytes, lowercase hex

  friend bool operator==(const DocumentRef&, const DocumentRef&) = default;
};

/// Text at and around an anchor as of its last attachment. All UTF-8.
struct AnchorContext {
  std::string anchor_text;
  std::string prefix;
  std::string suffix;

  friend bool operator==(const AnchorContext&, const AnchorContext&) = default;
};

enum class TagStatus { attached, orphaned, proposed };

inline std::string_view to_string(TagStatus s) {
  switch (s) {
    case TagStatus::attached: return "attached";
    case TagStatus::orphaned: return "orphaned";
    case TagStatus::proposed: return "proposed";
  }
  return "attached";
}

inline std::optional<TagStatus> parse_status(std::string_view s) {
  if (s == "attached") return TagStatus::attached;
  if (s == "orphaned") return TagStatus::orphaned;
  if (s == "proposed") return TagStatus::proposed;
  return std::nullopt;
}

struct TagRecord {
  std::string id;
  Anchor anchor;
  AnchorContext context;
  std::string annotation_type;
  json data;  // owned by the annotation type, opaque to the engine
  TagStatus status = TagStatus::attached;
  // Unknown keys found on load, written back verbatim on save.
  json extra = json::object();

  friend bool operator==(const TagRecord&, const TagRecord&) = default;
};

/// A single replace-range edit against a known document state.
struct EditOperation {
  DocOffset position;
  std::size_t deleted_length = 0;
  std::string inserted_text;  // UTF-8

  friend bool operator==(const EditOperation&, const EditOperation&) = default;
};

struct AnnotationFile {
  int format_version = kFormatVersion;
  DocumentRef document;
  std::vector<TagRecord> annotations;
  json extra = json::object();

  [[nodiscard]] TagRecord* find(std::string_view id) {
    auto it = std::find_if(annotations.begin(), annotations.end(),
                           [&](const TagRecord& t) { return t.id == id; });
    return it == annotations.end() ? nullptr : &*it;
  }
  [[nodiscard]] const TagRecord* find(std::string_view id) const {
    return const_cast<AnnotationFile*>(this)->find(id);
  }

  friend bool operator==(const AnnotationFile&, const AnnotationFile&) = default;
};

// Serialization order: (anchor.start, id).
inline void sort_annotations(AnnotationFile& file) {
  std::stable_sort(file.annotations.begin(), file.annotations.end(),
                   [](const TagRecord& a, const TagRecord& b) {
                     if (a.anchor.start != b.anchor.start) return a.anchor.start < b.anchor.start;
                     return a.id < b.id;
                   });
}

inline TextView slice(TextView doc, std::size_t start, std::size_t end) {
  return doc.substr(start, end - start);
}

/// Captures anchor text plus up to kContextWindow scalars on either side.
inline AnchorContext capture_context(TextView doc, Anchor anchor) {
  const std::size_t s = anchor.start.value;
  const std::size_t e = anchor.end.value;
  if (s > e || e > doc.size()) throw PreconditionError("capture_context: anchor out of bounds");
  const std::size_t ps = s > kContextWindow ? s - kContextWindow : 0;
  const std::size_t se = std::min(doc.size(), e + kContextWindow);
  return AnchorContext{encode_utf8(slice(doc, s, e)), encode_utf8(slice(doc, ps, s)),
                       encode_utf8(slice(doc, e, se))};
}

using ValidationReport = std::vector<std::string>;

/// Reports violated invariants of `record` against the decoded document.
/// Never throws and never mutates.
inline ValidationReport validate_tag(const TagRecord& record, TextView doc) {
  ValidationReport report;
  if (!is_uuid_v4(record.id)) report.emplace_back("invalid id");
  if (record.annotation_type.empty()) report.emplace_back("empty annotation type");
  const auto s = record.anchor.start.value;
  const auto e = record.anchor.end.value;
  bool in_bounds = true;
  if (s > e) {
    report.emplace_back("anchor start after end");
    in_bounds = false;
  } else if (e > doc.size()) {
    report.emplace_back("anchor out of bounds");
    in_bounds = false;
  }
  if (in_bounds && record.status == TagStatus::attached) {
    if (encode_utf8(slice(doc, s, e)) != record.context.anchor_text) {
      report.emplace_back("anchor text mismatch");
    }
  }
  return report;
}

inline ValidationReport validate_tag(const TagRecord& record, std::string_view document_utf8) {
  Text doc;
  try {
    doc = decode_utf8(document_utf8);
  } catch (const PreconditionError&) {
    return {"document is not valid UTF-8"};
  }
  return validate_tag(record, TextView(doc));
}

/// Throws PreconditionError unless `edit` is applicable to a document of
/// `doc_length` scalars. Returns the inserted length in scalars.
inline std::size_t check_edit(const EditOperation& edit, std::size_t doc_length) {
  const std::size_t inserted = scalar_length(edit.inserted_text);
  if (edit.deleted_length == 0 && inserted == 0) {
    throw PreconditionError("edit is a no-op (nothing deleted or inserted)");
  }
  if (edit.position.value > doc_length || edit.deleted_length > doc_length - edit.position.value) {
    throw PreconditionError("edit range [" + std::to_string(edit.position.value) + ", " +
                            std::to_string(edit.position.value + edit.deleted_length) +
                            ") exceeds document length " + std::to_string(doc_length));
  }
  return inserted;
}

/// Applies a single edit to decoded text.
inline Text apply_to_text(TextView doc, const EditOperation& edit) {
  check_edit(edit, doc.size());
  Text out;
  out.reserve(doc.size() + edit.inserted_text.size());
  out.append(doc.substr(0, edit.position.value));
  out.append(decode_utf8(edit.inserted_text));
  out.append(doc.substr(edit.position.value + edit.deleted_length));
  return out;
}

/// Builds a fresh attached tag over `anchor`.
inline TagRecord make_tag(TextView doc, Anchor anchor, std::string annotation_type, json data,
                          std::string id = make_uuid_v4()) {
  if (anchor.start.value > anchor.end.value) throw PreconditionError("anchor start after end");
  if (anchor.end.value > doc.size()) throw PreconditionError("anchor out of bounds");
  if (annotation_type.empty()) throw PreconditionError("annotation type must be non-empty");
  TagRecord tag;
  tag.id = std::move(id);
  tag.anchor = anchor;
  tag.context = capture_context(doc, anchor);
  tag.annotation_type = std::move(annotation_type);
  tag.data = std::move(data);
  tag.status = TagStatus::attached;
  return tag;
}

}  // namespace codetations
