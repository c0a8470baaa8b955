#pragma once

// Offline re-anchoring. After a document changed outside the engine's view,
// each tag is located again from its cached context:
//
//   1. exact: the cached anchor text occurs verbatim; pick the occurrence
//      nearest the old start (then the leftmost).
//   2. fuzzy: score every window whose length is within `max_window_slack` of
//      the anchor text length, at every start offset, and keep the best.
//      Ties: higher score, nearer the old start, smaller start, shorter.
//
// A semantic pass may run first: a completion provider is asked for the new
// text of the region, and that text is then located with the same scoring.
// Results are proposals; nothing changes until confirm().

#include <cmath>
#include <optional>
#include <variant>
#include <vector>

#include "codetations/model.hpp"
#include "codetations/provider.hpp"
#include "codetations/similarity.hpp"

namespace codetations {

struct ReattachConfig {
  double weight_anchor = 0.6;
  double weight_prefix = 0.2;
  double weight_suffix = 0.2;
  double threshold = 0.65;
  std::size_t max_window_slack = 8;

  void validate() const {
    const double sum = weight_anchor + weight_prefix + weight_suffix;
    if (std::abs(sum - 1.0) > 1e-9) throw PreconditionError("reattach weights must sum to 1");
    if (weight_anchor < 0 || weight_prefix < 0 || weight_suffix < 0) {
      throw PreconditionError("reattach weights must be non-negative");
    }
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw PreconditionError("reattach threshold must be in (0, 1]");
    }
  }
};

enum class Strategy { exact, fuzzy, semantic };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::exact: return "exact";
    case Strategy::fuzzy: return "fuzzy";
    case Strategy::semantic: return "semantic";
  }
  return "fuzzy";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "exact") return Strategy::exact;
  if (s == "fuzzy") return Strategy::fuzzy;
  if (s == "semantic") return Strategy::semantic;
  return std::nullopt;
}

struct ReattachProposal {
  std::string tag_id;
  Anchor candidate;
  std::string candidate_text;
  double score = 0.0;
  Strategy strategy = Strategy::fuzzy;
  bool accepted = false;
  // Digest of the document the proposal was scored against.
  std::string document_digest;

  friend bool operator==(const ReattachProposal&, const ReattachProposal&) = default;
};

/// No candidate reached the threshold. `best` is the highest-scoring window
/// (if any window existed) for reporting.
struct Orphaned {
  std::string tag_id;
  double best_score = 0.0;
  std::optional<Anchor> best;
};

using ReattachResult = std::variant<ReattachProposal, Orphaned>;

inline json to_json(const ReattachProposal& p) {
  return json{{"tagId", p.tag_id},
              {"candidate", {{"start", p.candidate.start.value}, {"end", p.candidate.end.value}}},
              {"candidateText", p.candidate_text},
              {"score", p.score},
              {"strategy", std::string(to_string(p.strategy))},
              {"accepted", p.accepted},
              {"documentDigest", p.document_digest}};
}

/// Text preceding `start` (up to the context window) and following `end`.
inline TextView context_before(TextView doc, std::size_t start) {
  const std::size_t from = start > kContextWindow ? start - kContextWindow : 0;
  return slice(doc, from, start);
}
inline TextView context_after(TextView doc, std::size_t end) {
  return slice(doc, end, std::min(doc.size(), end + kContextWindow));
}

inline double combine_scores(const ReattachConfig& config, double anchor_sim, double prefix_sim,
                             double suffix_sim) {
  return config.weight_anchor * anchor_sim + config.weight_prefix * prefix_sim +
         config.weight_suffix * suffix_sim;
}

/// Weighted similarity of `candidate` in `doc` against the cached context.
inline double score_candidate(const AnchorContext& context, TextView doc, Anchor candidate,
                              const ReattachConfig& config) {
  const auto s = candidate.start.value;
  const auto e = candidate.end.value;
  if (s > e || e > doc.size()) throw PreconditionError("score_candidate: candidate out of bounds");
  const Text anchor_text = decode_utf8(context.anchor_text);
  const Text prefix = decode_utf8(context.prefix);
  const Text suffix = decode_utf8(context.suffix);
  return combine_scores(config, similarity(TextView(anchor_text), slice(doc, s, e)),
                        similarity(TextView(prefix), context_before(doc, s)),
                        similarity(TextView(suffix), context_after(doc, e)));
}

inline double score_candidate(const AnchorContext& context, std::string_view doc_utf8,
                              Anchor candidate, const ReattachConfig& config) {
  const Text doc = decode_utf8(doc_utf8);
  return score_candidate(context, TextView(doc), candidate, config);
}

/// Window lengths examined by the fuzzy phase for a target of `target_len`.
/// Zero-length windows are never candidates.
struct WindowRange {
  std::size_t min_len;
  std::size_t max_len;
};

inline WindowRange window_range(std::size_t target_len, std::size_t slack) {
  const std::size_t lo = target_len > slack ? target_len - slack : 0;
  return {std::max<std::size_t>(lo, 1), target_len + slack};
}

namespace detail {

inline std::size_t distance_from(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

struct Located {
  Anchor anchor;
  double score = 0.0;
  bool exact = false;
};

// Exact occurrence of `target` nearest `old_start`, then leftmost.
inline std::optional<Anchor> nearest_occurrence(TextView doc, TextView target,
                                                std::size_t old_start) {
  std::optional<Anchor> best;
  std::size_t best_dist = 0;
  for (auto pos = doc.find(target); pos != TextView::npos; pos = doc.find(target, pos + 1)) {
    const std::size_t dist = distance_from(pos, old_start);
    if (!best || dist < best_dist) {
      best = make_anchor(pos, pos + target.size());
      best_dist = dist;
    }
  }
  return best;
}

// Best window by fuzzy scoring. Prefix/suffix similarities depend only on
// the window start/end, so they are computed once per offset; the anchor
// distance for every window length at a given start comes out of one DP pass.
inline std::optional<Located> best_window(TextView doc, TextView target, TextView prefix,
                                          TextView suffix, std::size_t old_start,
                                          const ReattachConfig& config) {
  const std::size_t n = doc.size();
  const auto [min_len, max_len] = window_range(target.size(), config.max_window_slack);
  if (min_len > n) return std::nullopt;

  std::vector<double> prefix_sim(n + 1), suffix_sim(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    prefix_sim[k] = similarity(prefix, context_before(doc, k));
    suffix_sim[k] = similarity(suffix, context_after(doc, k));
  }

  const std::size_t m = target.size();
  std::vector<std::size_t> prev(max_len + 1), cur(max_len + 1);
  std::optional<Located> best;
  std::size_t best_dist = 0;

  for (std::size_t s = 0; s + min_len <= n; ++s) {
    const std::size_t span = std::min(max_len, n - s);
    // prev[j] = distance(target[0..i), doc[s..s+j)); after the loop, row m.
    for (std::size_t j = 0; j <= span; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= m; ++i) {
      cur[0] = i;
      for (std::size_t j = 1; j <= span; ++j) {
        const std::size_t sub = prev[j - 1] + (target[i - 1] == doc[s + j - 1] ? 0u : 1u);
        cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
      }
      std::swap(prev, cur);
    }
    for (std::size_t len = min_len; len <= span; ++len) {
      const double score =
          combine_scores(config, similarity_from_distance(prev[len], m, len), prefix_sim[s],
                         suffix_sim[s + len]);
      const std::size_t dist = distance_from(s, old_start);
      // Starts and lengths are visited in increasing order, so on an equal
      // (score, distance) the incumbent already has the smaller start/length.
      if (!best || score > best->score || (score == best->score && dist < best_dist)) {
        best = Located{make_anchor(s, s + len), score, false};
        best_dist = dist;
      }
    }
  }
  return best;
}

inline std::variant<Located, Orphaned> locate(TextView doc, TextView target,
                                              const AnchorContext& context, std::size_t old_start,
                                              const ReattachConfig& config, bool allow_fuzzy,
                                              const std::string& tag_id) {
  if (auto hit = nearest_occurrence(doc, target, old_start)) return Located{*hit, 1.0, true};
  if (!allow_fuzzy) return Orphaned{tag_id, 0.0, std::nullopt};
  const Text prefix = decode_utf8(context.prefix);
  const Text suffix = decode_utf8(context.suffix);
  auto best = best_window(doc, target, prefix, suffix, old_start, config);
  if (!best) return Orphaned{tag_id, 0.0, std::nullopt};
  if (best->score < config.threshold) return Orphaned{tag_id, best->score, best->anchor};
  return *best;
}

inline ReattachProposal make_proposal(const TagRecord& tag, TextView doc, const Located& hit,
                                      Strategy strategy, const std::string& digest) {
  ReattachProposal p;
  p.tag_id = tag.id;
  p.candidate = hit.anchor;
  p.candidate_text = encode_utf8(slice(doc, hit.anchor.start.value, hit.anchor.end.value));
  p.score = hit.score;
  p.strategy = strategy;
  p.document_digest = digest;
  return p;
}

}  // namespace detail

/// Exact then fuzzy re-anchoring of one tag against `new_doc`.
/// With `allow_fuzzy = false` only the exact phase runs.
inline ReattachResult reattach(const TagRecord& tag, TextView new_doc, const ReattachConfig& config,
                               bool allow_fuzzy = true) {
  config.validate();
  if (tag.context.anchor_text.empty()) {
    throw PreconditionError("reattach: tag " + tag.id + " has no cached anchor text");
  }
  const Text target = decode_utf8(tag.context.anchor_text);
  const std::string digest = sha256_hex(encode_utf8(new_doc));
  auto found =
      detail::locate(new_doc, target, tag.context, tag.anchor.start.value, config, allow_fuzzy, tag.id);
  if (auto* orphan = std::get_if<Orphaned>(&found)) return *orphan;
  const auto& hit = std::get<detail::Located>(found);
  return detail::make_proposal(tag, new_doc, hit, hit.exact ? Strategy::exact : Strategy::fuzzy,
                               digest);
}

inline ReattachResult reattach(const TagRecord& tag, std::string_view new_doc_utf8,
                               const ReattachConfig& config, bool allow_fuzzy = true) {
  const Text doc = decode_utf8(new_doc_utf8);
  return reattach(tag, TextView(doc), config, allow_fuzzy);
}

inline std::string semantic_instructions() {
  return "The annotated region described by the anchor context was attached to an earlier "
         "version of this document. Reply with the exact text of the corresponding region in the "
         "current document and nothing else.";
}

/// Outcome of a semantic attempt, including why it fell back (if it did).
struct SemanticOutcome {
  ReattachResult result;
  bool used_fallback = false;
  std::string fallback_reason;  // provider error text, "empty output", "below threshold"
};

/// Asks `provider` for the new region text, then locates that text in
/// `new_doc`. Provider output is never used as an offset source. Any provider
/// failure, an empty reply or a sub-threshold location falls back to
/// reattach().
inline SemanticOutcome semantic_reattach_detailed(const TagRecord& tag, TextView new_doc,
                                                  CompletionProvider* provider,
                                                  const ReattachConfig& config) {
  config.validate();
  auto fallback = [&](std::string why) {
    return SemanticOutcome{reattach(tag, new_doc, config), true, std::move(why)};
  };
  if (provider == nullptr) return fallback("provider unavailable");
  std::string reply;
  try {
    reply = provider->complete({semantic_instructions(), encode_utf8(new_doc), tag.context});
  } catch (const std::exception& e) {
    return fallback(e.what());
  }
  Text target;
  try {
    target = decode_utf8(reply);
  } catch (const PreconditionError&) {
    return fallback("provider output is not valid UTF-8");
  }
  if (target.empty()) return fallback("empty output");
  auto found =
      detail::locate(new_doc, target, tag.context, tag.anchor.start.value, config, true, tag.id);
  if (std::holds_alternative<Orphaned>(found)) return fallback("below threshold");
  const std::string digest = sha256_hex(encode_utf8(new_doc));
  return SemanticOutcome{
      detail::make_proposal(tag, new_doc, std::get<detail::Located>(found), Strategy::semantic, digest),
      false, {}};
}

inline ReattachResult semantic_reattach(const TagRecord& tag, TextView new_doc,
                                        CompletionProvider* provider, const ReattachConfig& config) {
  return semantic_reattach_detailed(tag, new_doc, provider, config).result;
}

/// True when the tag's cached anchor text still sits at its offsets.
inline bool anchor_matches(const TagRecord& tag, TextView doc) {
  if (tag.anchor.start > tag.anchor.end || tag.anchor.end.value > doc.size()) return false;
  return encode_utf8(slice(doc, tag.anchor.start.value, tag.anchor.end.value)) ==
         tag.context.anchor_text;
}

/// Applies a proposal: the tag moves to the candidate, its context is
/// recaptured and it is attached again. The file now describes `new_doc`, so
/// every other attached tag whose anchor text no longer matches is marked
/// orphaned; the ones that still match get fresh context.
inline AnnotationFile confirm(const ReattachProposal& proposal, const AnnotationFile& file,
                              TextView new_doc) {
  const std::string digest = sha256_hex(encode_utf8(new_doc));
  if (digest != proposal.document_digest) {
    throw StaleError("proposal for tag " + proposal.tag_id +
                     " was computed against a different document version; re-run reattachment");
  }
  if (file.find(proposal.tag_id) == nullptr) {
    throw NotFoundError("confirm: no tag " + proposal.tag_id + " in " + file.document.path);
  }
  if (proposal.candidate.start > proposal.candidate.end ||
      proposal.candidate.end.value > new_doc.size()) {
    throw PreconditionError("confirm: candidate out of bounds");
  }
  AnnotationFile out = file;
  for (auto& tag : out.annotations) {
    if (tag.id == proposal.tag_id) {
      tag.anchor = proposal.candidate;
      tag.context = capture_context(new_doc, tag.anchor);
      tag.status = TagStatus::attached;
    } else if (tag.status == TagStatus::attached) {
      if (anchor_matches(tag, new_doc)) {
        tag.context = capture_context(new_doc, tag.anchor);
      } else {
        tag.status = TagStatus::orphaned;
      }
    }
  }
  out.document.digest = digest;
  return out;
}

/// Re-describes `file` against `new_doc` without moving anything: attached
/// tags that still match get fresh context, the rest become orphaned, and the
/// digest is updated.
inline AnnotationFile reconcile(const AnnotationFile& file, TextView new_doc) {
  AnnotationFile out = file;
  for (auto& tag : out.annotations) {
    if (tag.status != TagStatus::attached) continue;
    if (anchor_matches(tag, new_doc)) {
      tag.context = capture_context(new_doc, tag.anchor);
    } else {
      tag.status = TagStatus::orphaned;
    }
  }
  out.document.digest = sha256_hex(encode_utf8(new_doc));
  return out;
}

}  // namespace codetations
