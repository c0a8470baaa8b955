#pragma once

// Online anchor maintenance. Anchors follow edits the way comment ranges do
// in a word processor: insertions exactly at either boundary stay outside the
// anchor, insertions strictly inside it grow it, and a deletion that swallows
// the whole anchor orphans the tag (keeping its cached context so it can be
// re-anchored later).

#include <optional>
#include <span>
#include <vector>

#include "codetations/model.hpp"

namespace codetations {

enum class Bias { left, right };

enum class UpdateOutcome { unchanged, shifted, resized, orphaned };

inline std::string_view to_string(UpdateOutcome o) {
  switch (o) {
    case UpdateOutcome::unchanged: return "unchanged";
    case UpdateOutcome::shifted: return "shifted";
    case UpdateOutcome::resized: return "resized";
    case UpdateOutcome::orphaned: return "orphaned";
  }
  return "unchanged";
}

struct AnchorUpdate {
  std::string tag_id;
  Anchor new_anchor;
  UpdateOutcome outcome = UpdateOutcome::unchanged;

  friend bool operator==(const AnchorUpdate&, const AnchorUpdate&) = default;
};

namespace detail {

inline DocOffset map_position_unchecked(std::size_t x, std::size_t p, std::size_t d, std::size_t i,
                                        Bias bias) {
  if (x < p) return {x};
  if (x > p + d) return {x - d + i};
  if (x == p + d && d > 0) return {p + i};
  // x == p, or strictly inside the deleted range
  return {bias == Bias::right ? p + i : p};
}

inline UpdateOutcome classify(Anchor before, Anchor after) {
  if (before == after) return UpdateOutcome::unchanged;
  if (before.length() == after.length()) return UpdateOutcome::shifted;
  return UpdateOutcome::resized;
}

}  // namespace detail

/// Maps a pre-edit offset to its post-edit position.
/// `doc_length` is the pre-edit document length in scalars.
inline DocOffset map_position(DocOffset x, const EditOperation& edit, Bias bias,
                              std::size_t doc_length) {
  const std::size_t inserted = check_edit(edit, doc_length);
  if (x.value > doc_length) {
    throw PreconditionError("offset " + std::to_string(x.value) + " exceeds document length " +
                            std::to_string(doc_length));
  }
  return detail::map_position_unchecked(x.value, edit.position.value, edit.deleted_length, inserted,
                                        bias);
}

/// Overload without a known document length: only the edit's own shape is
/// checked.
inline DocOffset map_position(DocOffset x, const EditOperation& edit, Bias bias) {
  return map_position(x, edit, bias, std::max(x.value, edit.position.value + edit.deleted_length));
}

struct TagEditResult {
  TagRecord tag;
  AnchorUpdate update;
};

/// Moves one tag through `edit`. `post_edit_text` is the whole document after
/// the edit; the pre-edit length is derived from it.
///
/// Attached tags have their context refreshed from the post-edit text unless
/// the edit orphans them. Tags that are already orphaned or proposed only have
/// their anchor mapped; their cached context is what re-anchoring needs, so it
/// is left alone.
inline TagEditResult apply_edit(const TagRecord& tag, const EditOperation& edit,
                                TextView post_edit_text) {
  const std::size_t inserted = scalar_length(edit.inserted_text);
  if (post_edit_text.size() + edit.deleted_length < inserted) {
    throw PreconditionError("apply_edit: post-edit text shorter than the inserted text");
  }
  const std::size_t pre_length = post_edit_text.size() + edit.deleted_length - inserted;
  check_edit(edit, pre_length);
  const Anchor old = tag.anchor;
  if (old.start.value > old.end.value || old.end.value > pre_length) {
    throw PreconditionError("apply_edit: tag " + tag.id + " anchor is outside the pre-edit document");
  }
  const std::size_t p = edit.position.value;
  const std::size_t d = edit.deleted_length;

  TagEditResult result{tag, {tag.id, old, UpdateOutcome::unchanged}};
  TagRecord& out = result.tag;

  if (old.empty()) {
    // Zero-width anchors are a point; both ends move together, left-biased.
    const auto at = detail::map_position_unchecked(old.start.value, p, d, inserted, Bias::left);
    out.anchor = Anchor{at, at};
  } else {
    const auto start = detail::map_position_unchecked(old.start.value, p, d, inserted, Bias::right);
    const auto end = detail::map_position_unchecked(old.end.value, p, d, inserted, Bias::left);
    if (start >= end) {
      const auto at = detail::map_position_unchecked(old.start.value, p, d, inserted, Bias::left);
      out.anchor = Anchor{at, at};
      out.status = TagStatus::orphaned;
      result.update = {tag.id, out.anchor, UpdateOutcome::orphaned};
      return result;
    }
    out.anchor = Anchor{start, end};
  }
  result.update = {tag.id, out.anchor, detail::classify(old, out.anchor)};
  if (out.status == TagStatus::attached) out.context = capture_context(post_edit_text, out.anchor);
  return result;
}

struct BatchResult {
  AnnotationFile file;
  std::vector<AnchorUpdate> updates;  // one per tag, net effect of the batch
  Text final_text;
};

/// Folds `edits` (sequential semantics: each edit is addressed against the
/// result of the previous ones) over every tag of `file`. Any inconsistent
/// edit throws before anything is returned, so the caller's file is never
/// half-updated.
inline BatchResult apply_edit_batch(const AnnotationFile& file, std::span<const EditOperation> edits,
                                    TextView pre_batch_text) {
  BatchResult result{file, {}, Text(pre_batch_text)};
  std::vector<TagStatus> initial_status;
  std::vector<Anchor> initial_anchor;
  for (const auto& t : file.annotations) {
    initial_status.push_back(t.status);
    initial_anchor.push_back(t.anchor);
  }
  for (const auto& edit : edits) {
    Text next = apply_to_text(result.final_text, edit);
    for (auto& tag : result.file.annotations) tag = apply_edit(tag, edit, next).tag;
    result.final_text = std::move(next);
  }
  result.file.document.digest = sha256_hex(encode_utf8(result.final_text));
  for (std::size_t k = 0; k < result.file.annotations.size(); ++k) {
    const auto& tag = result.file.annotations[k];
    UpdateOutcome outcome = detail::classify(initial_anchor[k], tag.anchor);
    if (tag.status == TagStatus::orphaned && initial_status[k] != TagStatus::orphaned) {
      outcome = UpdateOutcome::orphaned;
    }
    result.updates.push_back({tag.id, tag.anchor, outcome});
  }
  return result;
}

/// The smallest single edit turning `region` (which starts at `region_start`)
/// into `replacement`: shared leading and trailing scalars are kept, so a tag
/// over the region survives unless the two have nothing in common.
/// std::nullopt when they are equal.
inline std::optional<EditOperation> replacement_edit(TextView region, TextView replacement,
                                                     std::size_t region_start) {
  std::size_t head = 0;
  while (head < region.size() && head < replacement.size() && region[head] == replacement[head]) ++head;
  std::size_t tail = 0;
  while (tail < region.size() - head && tail < replacement.size() - head &&
         region[region.size() - 1 - tail] == replacement[replacement.size() - 1 - tail]) {
    ++tail;
  }
  if (head == region.size() && head == replacement.size()) return std::nullopt;
  return EditOperation{{region_start + head},
                       region.size() - head - tail,
                       encode_utf8(replacement.substr(head, replacement.size() - head - tail))};
}

}  // namespace codetations
