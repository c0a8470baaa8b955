// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs without GoogleTest so its output stays one line each.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "codetations/cli.hpp"
#include "codetations/codetations.hpp"
#include "oracles.hpp"
#include "perturb.hpp"
#include "support.hpp"

using namespace codetations;
using testing_support::TempDir;
using testing_support::read_file;
using testing_support::write_file;

namespace {

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
  if (!cond) throw CheckFailed(what);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(prec);
  ss << v;
  return ss.str();
}

EditOperation random_edit(std::mt19937_64& rng, std::size_t n) {
  while (true) {
    const std::size_t p = rng() % (n + 1);
    const std::size_t room = n - p;
    std::size_t d = 0;
    switch (rng() % 4) {
      case 0: d = 0; break;
      case 1: d = room == 0 ? 0 : rng() % std::min<std::size_t>(room + 1, 8); break;
      case 2: d = room == 0 ? 0 : rng() % (room + 1); break;
      default: d = room == 0 ? 0 : rng() % std::min<std::size_t>(room + 1, 200); break;
    }
    const Text ins = testing_support::random_text(rng, rng() % 3 == 0 ? 0 : rng() % 20);
    if (d == 0 && ins.empty()) continue;
    return EditOperation{{p}, d, encode_utf8(ins)};
  }
}

Anchor random_anchor(std::mt19937_64& rng, std::size_t n) {
  const std::size_t s = rng() % (n + 1);
  const std::size_t e = s + (rng() % 5 == 0 ? 0 : rng() % (std::min<std::size_t>(n - s, 300) + 1));
  return make_anchor(s, e);
}

// ---------------------------------------------------------------------------
// 1. Edit-tracking properties

std::string criterion_edit_tracking() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  const int cases = 10000;
  std::size_t preserved = 0, orphaned = 0;
  for (int c = 0; c < cases; ++c) {
    const Text doc = testing_support::random_text(rng, rng() % 4097);
    const std::size_t n = doc.size();
    const Anchor a = random_anchor(rng, n);
    const TagRecord tag = make_tag(doc, a, "comment", nullptr);
    const EditOperation edit = random_edit(rng, n);
    const std::size_t p = edit.position.value, d = edit.deleted_length;
    const std::size_t i = scalar_length(edit.inserted_text);
    const Text after = apply_to_text(doc, edit);
    const std::string where = "case " + std::to_string(c);

    // Independent text oracle for the edit itself.
    Text expected_text = doc.substr(0, p) + decode_utf8(edit.inserted_text) + doc.substr(p + d);
    expect(after == expected_text, where + ": apply_to_text");

    const auto r = apply_edit(tag, edit, after);
    const Anchor na = r.tag.anchor;
    expect(na.start <= na.end && na.end.value <= after.size(), where + ": anchor in bounds");

    // Anchor-text preservation for edits that do not intersect the anchor.
    const std::size_t s = a.start.value, e = a.end.value;
    const bool before_anchor = p + d <= s;
    const bool after_anchor = p >= e;
    if (!a.empty() && (before_anchor || after_anchor)) {
      const std::size_t shift_s = before_anchor ? s - d + i : s;
      expect(na == make_anchor(shift_s, shift_s + (e - s)), where + ": non-intersecting edit moved anchor wrongly");
      expect(r.tag.context.anchor_text == tag.context.anchor_text, where + ": anchor text not preserved");
      ++preserved;
    }

    // Orphaned iff the edit deletes a range covering the whole (non-empty) anchor.
    const bool full_cover = !a.empty() && d > 0 && p <= s && p + d >= e;
    expect((r.tag.status == TagStatus::orphaned) == full_cover, where + ": orphan iff full-cover deletion");
    if (full_cover) {
      ++orphaned;
      expect(r.tag.context == tag.context, where + ": orphan keeps cached context");
    } else {
      expect(validate_tag(r.tag, TextView(after)).empty(), where + ": attached tag fails validation");
    }

    // Monotonicity of the position map, per bias and across biases.
    std::size_t x = rng() % (n + 1), y = rng() % (n + 1);
    if (x > y) std::swap(x, y);
    for (Bias b : {Bias::left, Bias::right}) {
      expect(map_position(DocOffset{x}, edit, b, n) <= map_position(DocOffset{y}, edit, b, n),
             where + ": map_position not monotone");
    }
    expect(map_position(DocOffset{x}, edit, Bias::left, n) <= map_position(DocOffset{x}, edit, Bias::right, n),
           where + ": left bias after right bias");

    // Batch equals the fold of single edits; every 10th case.
    if (c % 10 == 0) {
      AnnotationFile file{kFormatVersion, {"f.txt", sha256_hex(encode_utf8(doc))}, {}, json::object()};
      for (int k = 0; k < 4; ++k) file.annotations.push_back(make_tag(doc, random_anchor(rng, n), "comment", nullptr));
      std::vector<EditOperation> edits;
      Text folded_text = doc;
      std::vector<TagRecord> folded = file.annotations;
      for (int k = 0, m = 1 + static_cast<int>(rng() % 5); k < m; ++k) {
        const EditOperation ek = random_edit(rng, folded_text.size());
        edits.push_back(ek);
        const Text next = folded_text.substr(0, ek.position.value) + decode_utf8(ek.inserted_text) +
                          folded_text.substr(ek.position.value + ek.deleted_length);
        for (auto& t : folded) t = apply_edit(t, ek, next).tag;
        folded_text = next;
      }
      const auto batch = apply_edit_batch(file, edits, doc);
      expect(batch.final_text == folded_text, where + ": batch text");
      expect(batch.file.annotations == folded, where + ": batch differs from fold");
      expect(batch.file.document.digest == sha256_hex(encode_utf8(folded_text)), where + ": batch digest");
    }
  }
  const double secs = seconds_since(t0);
  expect(secs < 60.0, "runtime " + fmt(secs) + " s exceeds 60 s");
  return std::to_string(cases) + "/" + std::to_string(cases) + " cases (" + std::to_string(preserved) +
         " non-intersecting, " + std::to_string(orphaned) + " full-cover), " + fmt(secs) + " s";
}

// ---------------------------------------------------------------------------
// 2. Reattach oracle equivalence

std::string criterion_oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(777);
  const int cases = 110;
  int exact_phase = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = 100 + rng() % 1901;
    const Text doc = testing_support::code_like_text(rng, n);
    const std::size_t len = 3 + rng() % 38;
    const std::size_t s = rng() % (n - len), e = s + len;
    const TagRecord tag = make_tag(doc, make_anchor(s, e), "comment", nullptr);
    Text changed = testing_support::mutate_range(rng, doc, s, e, 1 + static_cast<int>(rng() % 4));
    std::size_t shift = 0;
    for (int k = 0, m = static_cast<int>(rng() % 3); k < m; ++k) {
      std::size_t sh = 0;
      changed = testing_support::insert_outside(rng, changed, s + shift, s + shift + len, sh);
      shift += sh;
    }
    if (changed.size() > 2000) changed.resize(2000);
    const Text target = decode_utf8(tag.context.anchor_text);
    const Text prefix = decode_utf8(tag.context.prefix), suffix = decode_utf8(tag.context.suffix);
    const std::string where = "case " + std::to_string(c);

    const auto got = detail::best_window(changed, target, prefix, suffix, s, ReattachConfig{});
    const auto want = oracle::exhaustive_best_window(changed, target, prefix, suffix, s, 8, {});
    expect(got.has_value() == want.has_value(), where + ": presence differs");
    if (!want) continue;
    expect(got->anchor == make_anchor(want->start, want->end),
           where + ": anchor [" + std::to_string(got->anchor.start.value) + "," +
               std::to_string(got->anchor.end.value) + ") vs oracle [" + std::to_string(want->start) + "," +
               std::to_string(want->end) + ")");
    expect(std::abs(got->score - want->score) <= 1e-9, where + ": score differs");

    // The full pipeline: exact phase first, then the thresholded window.
    const auto result = reattach(tag, changed, ReattachConfig{});
    if (auto at = oracle::nearest_exact(changed, target, s)) {
      ++exact_phase;
      const auto& p = std::get<ReattachProposal>(result);
      expect(p.strategy == Strategy::exact && p.candidate == make_anchor(*at, *at + len), where + ": exact phase");
    } else if (want->score >= 0.65) {
      const auto* p = std::get_if<ReattachProposal>(&result);
      expect(p && p->candidate == make_anchor(want->start, want->end), where + ": fuzzy proposal");
    } else {
      expect(std::holds_alternative<Orphaned>(result), where + ": below threshold must orphan");
    }
  }
  const double secs = seconds_since(t0);
  expect(secs < 300.0, "runtime " + fmt(secs) + " s exceeds 5 min");
  return std::to_string(cases) + "/" + std::to_string(cases) + " cases identical to oracle (" +
         std::to_string(exact_phase) + " resolved by exact phase), " + fmt(secs) + " s";
}

// ---------------------------------------------------------------------------
// 3. Robustness corpus

struct Token {
  enum Kind { word, op, comma, punct, keyword } kind;
  std::string text;
};

struct CodeLine {
  int indent = 0;
  std::vector<Token> tokens;
};

struct Style {
  std::string indent_unit = "    ";
  std::string op_space = " ";
  std::string comma_space = " ";
  std::string keyword_space = " ";
};

std::string identifier(std::mt19937_64& rng) {
  static const char* syl[] = {"ka", "lo", "mer", "ti", "van", "su", "pro", "dex", "ul", "rin", "zo", "bat", "col", "ny"};
  std::string s;
  for (int k = 0, m = 2 + static_cast<int>(rng() % 2); k < m; ++k) s += syl[rng() % 14];
  if (rng() % 3 == 0) s += "_" + std::string(syl[rng() % 14]);
  return s;
}

std::vector<CodeLine> code_file(std::mt19937_64& rng, int lines) {
  std::vector<CodeLine> out;
  int depth = 0;
  for (int k = 0; k < lines; ++k) {
    CodeLine l;
    l.indent = depth;
    const int pick = static_cast<int>(rng() % 6);
    auto w = [&](std::string t) { l.tokens.push_back({Token::word, std::move(t)}); };
    auto o = [&](std::string t) { l.tokens.push_back({Token::op, std::move(t)}); };
    auto p = [&](std::string t) { l.tokens.push_back({Token::punct, std::move(t)}); };
    auto kw = [&](std::string t) { l.tokens.push_back({Token::keyword, std::move(t)}); };
    auto comma = [&] { l.tokens.push_back({Token::comma, ","}); };
    if (pick == 0 && depth < 3) {
      kw("if"); p("("); w(identifier(rng)); o(rng() % 2 ? ">" : "=="); w(std::to_string(rng() % 100)); p(")"); p("{");
      out.push_back(l);
      ++depth;
      continue;
    }
    if (pick == 1 && depth > 0) {
      --depth;
      l.indent = depth;
      p("}");
      out.push_back(l);
      continue;
    }
    if (pick == 2) {
      kw("return"); w(identifier(rng)); o("+"); w(identifier(rng)); p(";");
    } else if (pick == 3) {
      w(identifier(rng)); p("."); w(identifier(rng)); p("(");
      w("\"" + identifier(rng) + " é\""); comma(); w(std::to_string(rng() % 1000)); p(")"); p(";");
    } else {
      kw("let"); w(identifier(rng)); o("="); w(identifier(rng)); p("(");
      w(identifier(rng)); comma(); w(identifier(rng)); comma(); w(std::to_string(rng() % 500)); p(")"); p(";");
    }
    out.push_back(l);
  }
  while (depth > 0) {
    --depth;
    out.push_back({depth, {{Token::punct, "}"}}});
  }
  return out;
}

std::string render_line(const CodeLine& l, const Style& st, const std::string& trailing) {
  std::string s;
  for (int k = 0; k < l.indent; ++k) s += st.indent_unit;
  for (std::size_t k = 0; k < l.tokens.size(); ++k) {
    const Token& t = l.tokens[k];
    if (t.kind == Token::op) s += st.op_space + t.text + st.op_space;
    else if (t.kind == Token::comma) s += "," + st.comma_space;
    else if (t.kind == Token::keyword) s += t.text + st.keyword_space;
    else if (t.text == "{") s += " {";
    else s += t.text;
  }
  return s + trailing;
}

Style random_style(std::mt19937_64& rng) {
  static const char* indents[] = {"  ", "    ", "\t", "   ", "        "};
  static const char* ops[] = {"", " ", "  "};
  Style st;
  st.indent_unit = indents[rng() % 5];
  st.op_space = ops[rng() % 3];
  st.comma_space = ops[rng() % 3];
  st.keyword_space = rng() % 4 == 0 ? "  " : " ";
  return st;
}

bool is_ws(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r'; }

std::vector<std::size_t> non_ws_positions(const Text& t) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!is_ws(t[k])) out.push_back(k);
  }
  return out;
}

std::string criterion_robustness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);
  int tags = 0, contained = 0, unchanged = 0, unchanged_ok = 0;
  for (int f = 0; f < 50; ++f) {
    const auto lines = code_file(rng, 30 + static_cast<int>(rng() % 50));
    const Style base;
    Style perturbed = random_style(rng);
    std::string orig_s, pert_s;
    std::vector<std::size_t> line_starts;
    for (const auto& l : lines) {
      line_starts.push_back(scalar_length(orig_s));
      orig_s += render_line(l, base, "") + "\n";
      if (rng() % 8 == 0) pert_s += "\n";
      pert_s += render_line(l, perturbed, rng() % 6 == 0 ? "  " : "") + "\n";
    }
    line_starts.push_back(scalar_length(orig_s));
    const Text orig = decode_utf8(orig_s), pert = decode_utf8(pert_s);
    const auto orig_nw = non_ws_positions(orig), pert_nw = non_ws_positions(pert);
    expect(orig_nw.size() == pert_nw.size(), "perturbation changed non-whitespace content");
    std::vector<std::size_t> nw_rank(orig.size(), SIZE_MAX);
    for (std::size_t k = 0; k < orig_nw.size(); ++k) nw_rank[orig_nw[k]] = k;

    for (int k = 0; k < 6; ++k) {
      // Anchor a statement, a fragment of one, or a run of 2-3 lines.
      const std::size_t li = rng() % lines.size();
      const std::size_t ls = line_starts[li] + lines[li].indent * base.indent_unit.size();
      std::size_t s = ls, e = line_starts[li + 1] - 1;
      const int shape = static_cast<int>(rng() % 3);
      if (shape == 1 && e - s > 12) {
        s = ls + rng() % ((e - s) / 2);
        e = s + 8 + rng() % (e - s - 8);
      } else if (shape == 2) {
        const std::size_t last = std::min(lines.size() - 1, li + 1 + rng() % 2);
        e = line_starts[last + 1] - 1;
      }
      if (e <= s) continue;
      const TagRecord tag = make_tag(orig, make_anchor(s, e), "comment", nullptr);
      std::vector<std::size_t> must;
      for (std::size_t x = s; x < e; ++x) {
        if (nw_rank[x] != SIZE_MAX) must.push_back(pert_nw[nw_rank[x]]);
      }
      if (must.empty()) continue;
      ++tags;
      const auto r = reattach(tag, pert, ReattachConfig{});
      if (const auto* p = std::get_if<ReattachProposal>(&r)) {
        if (p->candidate.start.value <= must.front() && must.back() < p->candidate.end.value) ++contained;
      }
      ++unchanged;
      const auto same = reattach(tag, orig, ReattachConfig{});
      if (const auto* p = std::get_if<ReattachProposal>(&same)) {
        if (p->candidate == tag.anchor && p->score == 1.0) ++unchanged_ok;
      }
    }
  }
  const double rate = tags ? static_cast<double>(contained) / tags : 0.0;
  const std::string detail = std::to_string(contained) + "/" + std::to_string(tags) + " perturbed tags contained (" +
                             fmt(100 * rate, 1) + "%), " + std::to_string(unchanged_ok) + "/" +
                             std::to_string(unchanged) + " unchanged identical, " + fmt(seconds_since(t0)) + " s";
  expect(rate >= 0.90, detail);
  expect(unchanged_ok == unchanged, detail);
  return detail;
}

// ---------------------------------------------------------------------------
// 4. Levenshtein spot checks

std::string criterion_levenshtein() {
  const Text k = decode_utf8("kitten"), s = decode_utf8("sitting");
  expect(oracle::levenshtein(k, s) == 3, "oracle distance");
  expect(levenshtein(k, s) == 3, "kitten/sitting distance " + std::to_string(levenshtein(k, s)));
  expect(std::abs(similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)) < 1e-12, "kitten/sitting similarity");
  expect(similarity("identical", "identical") == 1.0, "identity");
  expect(similarity("", "nonempty") == 0.0 && similarity("nonempty", "") == 0.0, "empty vs non-empty");
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const Text a = testing_support::random_text(rng, rng() % 40), b = testing_support::random_text(rng, rng() % 40);
    expect(levenshtein(a, b) == oracle::levenshtein(a, b), "random pair " + std::to_string(i));
  }
  return "distance 3, similarity " + fmt(similarity("kitten", "sitting"), 4) +
         ", identity 1.0, empty 0.0, 500 random pairs match the DP oracle";
}

// ---------------------------------------------------------------------------
// 5. Store

std::string criterion_store() {
  TempDir dir;
  StoreRoot root(dir.path());
  std::mt19937_64 rng(55);
  int with_extra = 0;
  for (int i = 0; i < 200; ++i) {
    const std::string path = "d" + std::to_string(i % 7) + "/s" + std::to_string(i % 3) + "/f" + std::to_string(i) + ".src";
    auto [doc, file] = testing_support::random_annotation_file(rng, path);
    file.extra["x-generator"] = {{"seed", i}, {"note", "unknown to the engine"}};
    if (!file.annotations.empty()) file.annotations[0].extra["x-ui"] = {{"collapsed", i % 2 == 0}};
    ++with_extra;
    save(file, root);
    const std::string bytes = read_file(root.sidecar_file(path));
    auto loaded = load(path, root);
    AnnotationFile expected = file;
    sort_annotations(expected);
    expect(loaded && *loaded == expected, "load(save(x)) != x for " + path);
    save(*loaded, root);
    expect(read_file(root.sidecar_file(path)) == bytes, "double save not byte-identical for " + path);
  }
  expect(list_sidecars(root).size() == 200, "sidecar count");

  // Crash between temp write and rename.
  auto [doc, file] = testing_support::random_annotation_file(rng, "crash.txt");
  save(file, root);
  const std::string before = read_file(root.sidecar_file("crash.txt"));
  AnnotationFile next = file;
  next.annotations.clear();
  next.extra["x-after"] = 1;
  const fs::path temp = stage_sidecar(next, root);
  expect(fs::exists(temp), "staged temp file missing");
  expect(read_file(root.sidecar_file("crash.txt")) == before, "prior sidecar bytes changed before rename");
  auto survivor = load("crash.txt", root);
  AnnotationFile expected = file;
  sort_annotations(expected);
  expect(survivor && *survivor == expected, "prior state not loadable after simulated crash");
  return "200/200 round trips with unknown fields (" + std::to_string(with_extra) +
         "), double save byte-identical, crash before rename keeps prior state";
}

// ---------------------------------------------------------------------------
// 6. apply-layers goldens

std::string criterion_layers() {
  const fs::path fixture = fs::path(CODETATIONS_FIXTURES) / "layers";
  const StoreRoot root(fixture / "repo");
  TempDir dir;
  const std::vector<std::pair<std::string, std::vector<std::string>>> selections{
      {"none", {}}, {"debug", {"debug"}}, {"debug_perf", {"debug", "perf"}}};
  int goldens = 0;
  for (const auto& [name, layers] : selections) {
    const fs::path out = dir.path() / name;
    apply_layers(root, {layers}, out);
    expect(testing_support::tree_files(out) == testing_support::tree_files(fixture / "golden" / name),
           "output for [" + name + "] differs from golden tree");
    ++goldens;
  }
  apply_layers(root, {{"perf", "debug"}}, dir.path() / "reversed");
  const std::string app = read_file(dir.path() / "reversed/src/app.c");
  expect(app.find("/* perf") < app.find("printf(\"n="), "[perf,debug] must put perf first");
  const std::string fwd = read_file(dir.path() / "debug_perf/src/app.c");
  expect(fwd.find("printf(\"n=") < fwd.find("/* perf"), "[debug,perf] must put debug first");

  const fs::path repo = dir.path() / "repo";
  fs::copy(fixture / "repo", repo, fs::copy_options::recursive);
  write_file(repo / "lib/util.py", "def double(x):\n    return 2 * x\n");
  bool stale = false;
  try {
    apply_layers(StoreRoot(repo), {{"debug"}}, dir.path() / "stale-out");
  } catch (const StaleError&) {
    stale = true;
  }
  expect(stale, "stale source did not raise");
  expect(!fs::exists(dir.path() / "stale-out"), "stale run wrote output");
  return std::to_string(goldens) + "/3 goldens byte-identical, same-offset order follows selection, stale source rejected";
}

// ---------------------------------------------------------------------------
// 7. Service conformance over TCP

const std::string kServiceDoc =
    "def mean(values):\n"
    "    total = 0\n"
    "    for v in values:\n"
    "        total += v\n"
    "    return total / len(values)\n";

json ok(testing_support::LineClient& c, json req, std::vector<json>* events = nullptr) {
  json r = c.call(std::move(req), events);
  expect(r.value("ok", false), "request failed: " + r.dump());
  return r["result"];
}

void validate_remote(testing_support::LineClient& c, const std::string& path) {
  const Text text = decode_utf8(ok(c, {{"op", "get_document_text"}, {"path", path}})["text"].get<std::string>());
  for (const auto& t : ok(c, {{"op", "list_annotations"}, {"path", path}})["annotations"]) {
    const auto problems = validate_tag(tag_from_json(t), TextView(text));
    expect(problems.empty(), "validate_tag failed for " + t["id"].get<std::string>());
  }
}

std::string criterion_service() {
  TempDir dir;
  write_file(dir.path() / "stats.py", kServiceDoc);
  const std::string region = "return math.fsum(values) / max(len(values), 1)";
  const std::string corrupted = "return mth.fsum(value) / max(len(vals), 1)";  // 4 deletions in 47 scalars
  auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{corrupted});
  HostService service(ServiceOptions{StoreRoot(dir.path()), {}, provider});
  TcpServer server(service);
  testing_support::LineClient c(server.start(0));
  std::vector<json> events;
  ok(c, {{"op", "subscribe"}});

  const Text doc = decode_utf8(kServiceDoc);
  const std::size_t loop = doc.find(decode_utf8("for v in values:"));
  const std::size_t ret = doc.find(decode_utf8("return total / len(values)"));
  const std::string a = ok(c, {{"op", "add_annotation"}, {"path", "stats.py"}, {"start", loop}, {"end", loop + 16},
                               {"annotationType", "comment"}, {"data", {{"text", "could use sum()"}}}},
                           &events)["id"];
  const std::string b = ok(c, {{"op", "add_annotation"}, {"path", "stats.py"}, {"start", ret}, {"end", ret + 26},
                               {"annotationType", "comment"}, {"data", {{"text", "divides by zero"}}}},
                           &events)["id"];
  expect(ok(c, {{"op", "list_annotations"}, {"path", "stats.py"}})["annotations"].size() == 2, "list after add");

  // In-service edits.
  ok(c, {{"op", "set_document_text"}, {"path", "stats.py"},
         {"edits", {{{"position", 0}, {"insertedText", "import math\n\n"}},
                    {{"position", 13 + loop + 4}, {"deletedLength", 1}, {"insertedText", "value"}}}}},
     &events);
  validate_remote(c, "stats.py");
  const json tags = ok(c, {{"op", "list_annotations"}, {"path", "stats.py"}})["annotations"];
  for (const auto& t : tags) {
    if (t["id"] == a) expect(t["context"]["anchorText"] == "for value in values:", "loop anchor resized");
    if (t["id"] == b) expect(t["context"]["anchorText"] == "return total / len(values)", "return anchor kept");
  }
  expect(ok(c, {{"op", "check"}, {"path", "stats.py"}})["state"] == "fresh", "fresh after in-service edits");

  // Out-of-band rewrite.
  const fs::path sidecar = dir.path() / ".codetations/stats.py.annotations.json";
  const std::string sidecar_before = read_file(sidecar);
  write_file(dir.path() / "stats.py", "# statistics helpers\n" + read_file(dir.path() / "stats.py"));
  expect(ok(c, {{"op", "check"}, {"path", "stats.py"}})["state"] == "stale", "stale after rewrite");
  events.clear();
  const json proposals = ok(c, {{"op", "notify_external_change"}, {"path", "stats.py"}}, &events)["proposals"];
  expect(proposals.size() == 2, "two proposals expected");
  expect(read_file(sidecar) == sidecar_before, "sidecar changed before confirm");
  const json listed = ok(c, {{"op", "list_annotations"}, {"path", "stats.py"}}, &events);
  expect(listed["pendingProposals"].size() == 2, "pending proposals listed");
  expect(read_file(sidecar) == sidecar_before, "sidecar changed by list");
  int orphan_events = 0;
  for (const auto& e : events) orphan_events += e["event"] == "orphanDetected";
  expect(orphan_events == 2, "orphanDetected events: " + std::to_string(orphan_events));
  ok(c, {{"op", "confirm_proposals"}, {"path", "stats.py"}});
  expect(read_file(sidecar) != sidecar_before, "confirm persisted nothing");
  expect(ok(c, {{"op", "check"}, {"path", "stats.py"}})["state"] == "fresh", "fresh after confirm");
  validate_remote(c, "stats.py");

  // Semantic re-anchoring: the return statement is rewritten and the mock
  // replies with a corrupted copy of the new statement.
  std::string rewritten = read_file(dir.path() / "stats.py");
  const std::string old_return = "return total / len(values)";
  rewritten.replace(rewritten.find(old_return), old_return.size(), region);
  write_file(dir.path() / "stats.py", rewritten);
  const json sem = ok(c, {{"op", "notify_external_change"}, {"path", "stats.py"}, {"strategy", "semantic"}});
  const std::size_t want = decode_utf8(rewritten).find(decode_utf8(region));
  expect(sem["proposals"].size() == 1 && provider->requests().size() == 1, "one semantic proposal: " + sem.dump());
  const json& sp = sem["proposals"][0];
  expect(sp["tagId"] == b && sp["strategy"] == "semantic" && sp["candidate"]["start"] == want &&
             sp["candidate"]["end"] == want + scalar_length(region),
         "semantic proposal did not locate the corrupted region: " + sem.dump());
  ok(c, {{"op", "reject_proposals"}, {"path", "stats.py"}});

  // Provider-absent mode: every non-LLM op still works.
  TempDir bare;
  write_file(bare.path() / "notes.md", "# Notes\n\nSome text to annotate.\n");
  HostService plain(ServiceOptions{StoreRoot(bare.path()), {}, nullptr});
  TcpServer plain_server(plain);
  testing_support::LineClient p(plain_server.start(0));
  const std::string id = ok(p, {{"op", "add_annotation"}, {"path", "notes.md"}, {"start", 9}, {"end", 18},
                                {"annotationType", "comment"}, {"data", nullptr}})["id"];
  ok(p, {{"op", "list_annotations"}, {"path", "notes.md"}});
  ok(p, {{"op", "set_annotation_data"}, {"tagId", id}, {"data", {{"text", "hi"}}}});
  expect(ok(p, {{"op", "get_annotation_data"}, {"tagId", id}})["data"]["text"] == "hi", "data round trip");
  ok(p, {{"op", "move_annotation"}, {"path", "notes.md"}, {"tagId", id}, {"start", 0}, {"end", 7}});
  ok(p, {{"op", "set_document_text"}, {"path", "notes.md"}, {"edits", {{{"position", 0}, {"insertedText", "\n"}}}}});
  write_file(bare.path() / "notes.md", "intro\n" + read_file(bare.path() / "notes.md"));
  expect(ok(p, {{"op", "notify_external_change"}, {"path", "notes.md"}})["proposals"].size() == 1, "fuzzy without provider");
  ok(p, {{"op", "confirm_proposals"}, {"path", "notes.md"}});
  expect(ok(p, {{"op", "check"}, {"path", "notes.md"}})["state"] == "fresh", "check without provider");
  ok(p, {{"op", "list_documents"}});
  ok(p, {{"op", "remove_annotation"}, {"path", "notes.md"}, {"tagId", id}});
  const json llm = p.call({{"op", "llm_complete"}, {"request", {{"instructions", "x"}}}});
  expect(!llm["ok"] && llm["error"]["code"] == "provider_unavailable", "llm_complete without provider");
  return "add/list/edit/notify/confirm/check conformant, sidecar unchanged until confirm, semantic corrupted echo "
         "located, provider-absent ops work";
}

// ---------------------------------------------------------------------------
// 8. LM unit-test loop

std::string criterion_lm_unit_test() {
  TempDir dir;
  const std::string source =
      "function total(items) {\n"
      "  let sum = 0;\n"
      "  // adds every item except the last one\n"
      "  for (const x of items) sum += x;\n"
      "  return sum;\n"
      "}\n";
  write_file(dir.path() / "total.js", source);
  const std::string region = "  // adds every item except the last one\n  for (const x of items) sum += x;";
  const std::string suggestion = "  // adds every item\n  for (const x of items) sum += x;";
  auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{"NO\n" + suggestion, "YES\n"});
  HostService service(ServiceOptions{StoreRoot(dir.path()), {}, provider});
  TcpServer server(service);
  testing_support::LineClient c(server.start(0));

  const std::size_t s = decode_utf8(source).find(decode_utf8(region));
  const std::string id = ok(c, {{"op", "add_annotation"}, {"path", "total.js"}, {"start", s},
                                {"end", s + scalar_length(region)}, {"annotationType", "lm-unit-test"},
                                {"data", {{"question", "Is the loop's comment accurate?"}}}})["id"];
  const json first = ok(c, {{"op", "run_lm_unit_test"}, {"tagId", id}});
  expect(first["pass"] == false && first["suggestion"] == suggestion, "first run should fail with a suggestion");

  const json tag = ok(c, {{"op", "list_annotations"}, {"path", "total.js"}})["annotations"][0];
  const auto edit = replacement_edit(decode_utf8(tag["context"]["anchorText"].get<std::string>()),
                                     decode_utf8(first["suggestion"].get<std::string>()),
                                     tag["anchor"]["start"].get<std::size_t>());
  expect(edit.has_value(), "suggestion equals current text");
  ok(c, {{"op", "set_document_text"}, {"path", "total.js"}, {"edits", json::array({to_json(*edit)})}});
  const json after = ok(c, {{"op", "list_annotations"}, {"path", "total.js"}})["annotations"][0];
  expect(after["status"] == "attached" && after["context"]["anchorText"] == suggestion, "tag follows the repair");

  const json second = ok(c, {{"op", "run_lm_unit_test"}, {"tagId", id}});
  expect(second["pass"] == true && second["suggestion"].is_null(), "second run should pass");
  const json data = ok(c, {{"op", "get_annotation_data"}, {"tagId", id}})["data"];
  expect(data["lastResult"]["pass"] == true, "lastResult stored");
  expect(data["lastResult"]["documentDigest"] == sha256_hex(read_file(dir.path() / "total.js")), "lastResult digest");
  expect(provider->requests().size() == 2, "provider called twice");
  return "NO + suggestion, suggestion applied via set_document_text, rerun YES";
}

// ---------------------------------------------------------------------------
// 9. CLI

struct CliResult {
  int code;
  std::string out;
};

CliResult cli_run(const fs::path& repo, std::vector<std::string> args, const std::string& input = "") {
  args.insert(args.begin(), {"--repo", repo.string()});
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli::run_cli(args, in, out, err);
  return {code, out.str()};
}

void expect_schema(const std::string& def, const std::string& out) {
  const std::string errors = testing_support::schema_errors(def, json::parse(out));
  expect(errors.empty(), def + " schema: " + errors);
}

std::string criterion_cli() {
  TempDir dir;
  const fs::path repo = dir.path();
  const std::string src = "package main\n\nfunc add(a, b int) int {\n\treturn a + b\n}\n\nfunc main() {\n\tprintln(add(1, 2))\n}\n";
  write_file(repo / "main.go", src);
  write_file(repo / "other.go", "package main\n\nvar unused = 1\n");
  expect(cli_run(repo, {"init"}).code == 0, "init");
  auto r = cli_run(repo, {"add", "main.go", "--match", "return a + b", "--json"});
  expect(r.code == 0, "add");
  expect_schema("cliAnnotation", r.out);
  const std::string id = json::parse(r.out)["annotation"]["id"];
  expect(cli_run(repo, {"add", "main.go", "--match", "println(add(1, 2))", "--type", "add-layer", "--data",
                        R"({"layerName":"trace","insertText":"\tprintln(\"enter\")\n"})"})
                 .code == 0,
         "add layer tag");
  expect(cli_run(repo, {"add", "other.go", "--match", "var unused"}).code == 0, "add other");

  r = cli_run(repo, {"list", "--json"});
  expect(r.code == 0, "list");
  expect_schema("cliList", r.out);
  r = cli_run(repo, {"show", id, "--json"});
  expect(r.code == 0, "show");
  expect_schema("cliAnnotation", r.out);
  r = cli_run(repo, {"check", "--json"});
  expect(r.code == 0, "check clean exits 0");
  expect_schema("cliCheck", r.out);
  r = cli_run(repo, {"apply-layers", "--layers", "trace", "--out", (dir.path() / "out").string(), "--json"});
  expect(r.code == 0, "apply-layers");
  expect_schema("cliApplyLayers", r.out);

  // check -> reattach -> check convergence.
  write_file(repo / "main.go", "// Package main adds.\n" + src);
  r = cli_run(repo, {"check", "--json"});
  expect(r.code == 3, "check stale exits 3");
  expect_schema("cliCheck", r.out);
  r = cli_run(repo, {"reattach", "main.go", "--json"});
  expect(r.code == 3, "reattach without confirmation exits 3");
  expect_schema("cliReattach", r.out);
  expect(cli_run(repo, {"check"}).code == 3, "unconfirmed reattach changes nothing");
  r = cli_run(repo, {"reattach", "main.go", "--yes", "--json"});
  expect(r.code == 0, "reattach --yes exits 0");
  expect_schema("cliReattach", r.out);
  r = cli_run(repo, {"check", "--json"});
  expect(r.code == 0 && json::parse(r.out)["findings"] == false, "check converged");
  r = cli_run(repo, {"reattach", "main.go", "--json"});
  expect(r.code == 0 && json::parse(r.out)["proposals"].empty(), "second reattach is a no-op");

  // Interactive path.
  write_file(repo / "main.go", "\n" + read_file(repo / "main.go"));
  r = cli_run(repo, {"reattach", "main.go"}, "y\ny\n");
  expect(r.code == 0 && cli_run(repo, {"check"}).code == 0, "interactive confirm converges");

  // Usage and operation errors.
  expect(cli_run(repo, {}).code == 2, "no subcommand exits 2");
  expect(cli_run(repo, {"bogus"}).code == 2, "unknown subcommand exits 2");
  expect(cli_run(repo, {"add", "main.go", "--match", "x", "--data", "{"}).code == 2, "bad --data exits 2");
  expect(cli_run(repo, {"reattach", "main.go", "--threshold", "7"}).code == 2, "bad threshold exits 2");
  expect(cli_run(repo, {"show", "00000000-0000-4000-8000-000000000000"}).code == 1, "unknown id exits 1");
  expect(cli_run(repo, {"add", "missing.go", "--start", "0", "--end", "1"}).code == 1, "missing file exits 1");
  expect(cli_run(repo, {"add", "../x.go", "--start", "0", "--end", "1"}).code == 1, "escaping path exits 1");

  // The installed binary behaves the same.
  const std::string bin = std::string(CODETATIONS_CLI_PATH) + " --repo '" + repo.string() + "' ";
  expect(WEXITSTATUS(std::system((bin + "check > /dev/null").c_str())) == 0, "binary check exits 0");
  expect(WEXITSTATUS(std::system((bin + "nope 2> /dev/null").c_str())) == 2, "binary usage exits 2");
  write_file(repo / "other.go", "package main\n");
  expect(WEXITSTATUS(std::system((bin + "check > /dev/null").c_str())) == 3, "binary findings exits 3");
  expect(WEXITSTATUS(std::system((bin + "show nope 2> /dev/null").c_str())) == 1, "binary op error exits 1");
  return "check/reattach/check converges, exit codes 0/1/2/3, list/show/add/check/reattach/apply-layers JSON "
         "valid against schema";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
      {"edit-tracking properties", criterion_edit_tracking},
      {"reattach oracle equivalence", criterion_oracle_equivalence},
      {"reattach robustness corpus", criterion_robustness},
      {"levenshtein spot checks", criterion_levenshtein},
      {"store round trip and crash safety", criterion_store},
      {"apply-layers goldens", criterion_layers},
      {"service conformance", criterion_service},
      {"lm unit-test loop", criterion_lm_unit_test},
      {"cli", criterion_cli},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    std::string verdict, detail;
    try {
      detail = criteria[k].second();
      verdict = "PASS";
    } catch (const std::exception& e) {
      detail = e.what();
      verdict = "FAIL";
      ++failed;
    }
    std::cout << verdict << "  " << (k + 1) << ". " << criteria[k].first << ": " << detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
