#pragma once

// `codetations` command line. run_cli() is the whole program minus process
// setup, so it can be driven from tests with string streams.
//
// Exit codes: 0 success, 1 operation error, 2 usage error, 3 findings
// (stale files or orphaned tags) from check/reattach.

#include <csignal>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "codetations/config.hpp"
#include "codetations/host_service.hpp"
#include "codetations/http_provider.hpp"
#include "codetations/layers.hpp"
#include "codetations/reanchoring.hpp"
#include "codetations/server.hpp"
#include "codetations/store.hpp"

namespace codetations::cli {

enum ExitCode : int { kOk = 0, kOpError = 1, kUsage = 2, kFindings = 3 };

class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string preview(std::string_view text, std::size_t max = 40) {
  std::string out;
  std::size_t n = 0;
  for (char c : text) {
    if (n >= max) {
      out += "...";
      break;
    }
    if (c == '\n') out += "\\n";
    else if (c == '\t') out += "\\t";
    else out.push_back(c);
    ++n;
  }
  return "\"" + out + "\"";
}

inline std::string range(Anchor a) {
  return "[" + std::to_string(a.start.value) + "," + std::to_string(a.end.value) + ")";
}

inline std::string fmt_score(double s) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << s;
  return ss.str();
}

struct Addressing {
  long long start = -1;
  long long end = -1;
  std::string match;
};

inline void add_addressing(CLI::App* cmd, Addressing& a) {
  auto* s = cmd->add_option("--start", a.start, "Anchor start offset (Unicode scalar values)");
  auto* e = cmd->add_option("--end", a.end, "Anchor end offset (exclusive)");
  auto* m = cmd->add_option("--match", a.match, "Anchor the unique occurrence of this literal text");
  s->needs(e);
  e->needs(s);
  m->excludes(s);
  m->excludes(e);
}

// Resolves --start/--end or --match against the decoded document.
inline Anchor resolve_anchor(const Addressing& a, TextView doc) {
  if (!a.match.empty()) {
    const Text needle = decode_utf8(a.match);
    std::vector<std::size_t> hits;
    for (auto pos = doc.find(needle); pos != TextView::npos; pos = doc.find(needle, pos + 1)) {
      hits.push_back(pos);
      if (hits.size() > 1) break;
    }
    if (hits.empty()) throw PreconditionError("--match text not found");
    if (hits.size() > 1) throw PreconditionError("--match text occurs more than once; use --start/--end");
    return make_anchor(hits[0], hits[0] + needle.size());
  }
  if (a.start < 0 || a.end < 0) throw UsageError("give either --start and --end, or --match");
  return make_anchor(static_cast<std::size_t>(a.start), static_cast<std::size_t>(a.end));
}

struct Loaded {
  Text text;
  std::string digest;
  std::optional<AnnotationFile> file;
};

inline Loaded load_source(const StoreRoot& root, const std::string& path) {
  const fs::path source = root.source_file(path);
  std::error_code ec;
  if (!fs::is_regular_file(source, ec)) throw NotFoundError("no such file: " + path);
  const std::string bytes = read_file_bytes(source);
  return {decode_utf8(bytes), sha256_hex(bytes), load(path, root)};
}

inline void require_fresh(const Loaded& l, const std::string& path) {
  if (l.file && l.file->document.digest != l.digest) {
    throw StaleError(path + " changed since it was annotated; run `codetations reattach " + path + "`");
  }
}

inline std::size_t count_status(const AnnotationFile& f, TagStatus s) {
  return static_cast<std::size_t>(std::count_if(f.annotations.begin(), f.annotations.end(),
                                                [&](const TagRecord& t) { return t.status == s; }));
}

inline void print_tag(std::ostream& out, const TagRecord& t) {
  out << "  " << t.id << "  " << range(t.anchor) << "  " << t.annotation_type << "  "
      << to_string(t.status) << "  " << preview(t.context.anchor_text) << "\n";
}

}  // namespace detail

struct Options {
  std::string repo = ".";
  bool json_out = false;
  std::string provider;
  std::string mock_script;
};

inline int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Document-external annotations anchored to text spans", "codetations"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--repo", opt.repo, "Repository root (default: current directory)");

  // init
  auto* init = app.add_subcommand("init", "Create the .codetations store with a default config");

  // add
  std::string add_path, add_type = "comment", add_data = "null";
  detail::Addressing add_addr;
  auto* add = app.add_subcommand("add", "Attach a new annotation to a text span");
  add->add_option("path", add_path, "Repo-relative source file")->required();
  detail::add_addressing(add, add_addr);
  add->add_option("--type", add_type, "Annotation type name");
  add->add_option("--data", add_data, "Annotation data as JSON");
  add->add_flag("--json", opt.json_out);

  // list
  std::vector<std::string> list_paths;
  auto* list = app.add_subcommand("list", "List annotations");
  list->add_option("paths", list_paths, "Source files (default: all annotated files)");
  list->add_flag("--json", opt.json_out);

  // show
  std::string show_id;
  auto* show = app.add_subcommand("show", "Show one annotation by id");
  show->add_option("id", show_id)->required();
  show->add_flag("--json", opt.json_out);

  // move
  std::string move_path, move_id;
  detail::Addressing move_addr;
  auto* move = app.add_subcommand("move", "Move an annotation to a new span");
  move->add_option("path", move_path)->required();
  move->add_option("id", move_id)->required();
  detail::add_addressing(move, move_addr);
  move->add_flag("--json", opt.json_out);

  // remove
  std::string remove_path, remove_id;
  auto* remove = app.add_subcommand("remove", "Delete an annotation");
  remove->add_option("path", remove_path)->required();
  remove->add_option("id", remove_id)->required();

  // check
  std::vector<std::string> check_paths;
  auto* check_cmd = app.add_subcommand("check", "Report fresh/stale/absent sidecars and orphaned tags");
  check_cmd->add_option("paths", check_paths, "Source files (default: all annotated files)");
  check_cmd->add_flag("--json", opt.json_out);

  // reattach
  std::string re_path, re_strategy = "fuzzy";
  bool re_yes = false;
  double re_threshold = -1;
  auto* re = app.add_subcommand("reattach", "Re-anchor annotations of a file that changed offline");
  re->add_option("path", re_path)->required();
  re->add_option("--strategy", re_strategy)->check(CLI::IsMember({"exact", "fuzzy", "semantic"}));
  re->add_flag("--yes", re_yes, "Confirm every proposal without prompting");
  re->add_option("--threshold", re_threshold)->check(CLI::Range(0.0, 1.0));
  re->add_option("--provider", opt.provider, "none, mock or http");
  re->add_option("--mock-script", opt.mock_script, "JSON array of scripted replies for --provider mock");
  re->add_flag("--json", opt.json_out);

  // apply-layers
  std::vector<std::string> layers;
  std::string layers_out;
  auto* apply = app.add_subcommand("apply-layers", "Write a copy of the repository with layers applied");
  apply->add_option("--layers", layers, "Comma-separated layer names, in priority order")->delimiter(',');
  apply->add_option("--out", layers_out, "Output directory (must be empty or absent)")->required();
  apply->add_flag("--json", opt.json_out);

  // serve
  int port = 7341, http_port = -1, watch_ms = 0;
  auto* serve = app.add_subcommand("serve", "Run the host service on 127.0.0.1");
  serve->add_option("--port", port, "TCP port for newline-delimited JSON (0 = any)");
  serve->add_option("--http-port", http_port, "Port for the HTTP shim (-1 = off)");
  serve->add_option("--watch-ms", watch_ms, "Poll held documents for external changes (0 = off)");
  serve->add_option("--provider", opt.provider, "none, mock or http");
  serve->add_option("--mock-script", opt.mock_script);
  serve->add_option("--repo", opt.repo, "Repository root");

  std::vector<const char*> argv{"codetations"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const StoreRoot root(opt.repo);
    Config config = load_config(root);
    auto provider_settings = [&] {
      ProviderSettings s = config.provider;
      if (!opt.provider.empty()) s.name = opt.provider;
      if (!opt.mock_script.empty()) s.mock_script = opt.mock_script;
      return s;
    };

    if (init->parsed()) {
      const fs::path cfg = root.store_dir / std::string(kConfigFileName);
      std::error_code ec;
      if (fs::exists(cfg, ec)) {
        out << "already initialized: " << cfg.string() << "\n";
      } else {
        write_file_atomic(cfg, json{{"reattach", to_json(ReattachConfig{})}}.dump(2) + "\n");
        out << "initialized " << cfg.string() << "\n";
      }
      return kOk;
    }

    if (add->parsed()) {
      json data;
      try {
        data = json::parse(add_data);
      } catch (const json::exception&) {
        throw UsageError("--data is not valid JSON");
      }
      auto l = detail::load_source(root, add_path);
      detail::require_fresh(l, add_path);
      const Anchor anchor = detail::resolve_anchor(add_addr, l.text);
      TagRecord tag = make_tag(l.text, anchor, add_type, std::move(data));
      AnnotationFile file = l.file.value_or(AnnotationFile{kFormatVersion, {add_path, l.digest}, {}, json::object()});
      file.document.digest = l.digest;
      file.annotations.push_back(tag);
      save(file, root);
      if (opt.json_out) {
        out << json{{"path", add_path}, {"annotation", to_json(tag)}}.dump(2) << "\n";
      } else {
        out << "added " << tag.id << " " << detail::range(tag.anchor) << " "
            << detail::preview(tag.context.anchor_text) << "\n";
      }
      return kOk;
    }

    if (list->parsed()) {
      if (list_paths.empty()) list_paths = list_sidecars(root);
      json files = json::array();
      for (const auto& p : list_paths) {
        auto file = load(p, root);
        const auto state = check(p, root);
        const auto tags = file ? file->annotations : std::vector<TagRecord>{};
        if (opt.json_out) {
          files.push_back({{"path", p}, {"state", std::string(to_string(state))}, {"annotations", tags_json(tags)}});
        } else {
          out << p << " (" << to_string(state) << ", " << tags.size() << " annotation"
              << (tags.size() == 1 ? "" : "s") << ")\n";
          for (const auto& t : tags) detail::print_tag(out, t);
        }
      }
      if (opt.json_out) out << json{{"files", files}}.dump(2) << "\n";
      return kOk;
    }

    if (show->parsed()) {
      for (const auto& p : list_sidecars(root)) {
        auto file = load(p, root);
        if (!file) continue;
        if (const TagRecord* t = file->find(show_id)) {
          if (opt.json_out) {
            out << json{{"path", p}, {"annotation", to_json(*t)}}.dump(2) << "\n";
          } else {
            out << "id:     " << t->id << "\npath:   " << p << "\nanchor: " << detail::range(t->anchor)
                << "\ntype:   " << t->annotation_type << "\nstatus: " << to_string(t->status)
                << "\ntext:   " << detail::preview(t->context.anchor_text, 200)
                << "\ndata:   " << t->data.dump() << "\n";
          }
          return kOk;
        }
      }
      throw NotFoundError("no annotation with id " + show_id);
    }

    if (move->parsed()) {
      auto l = detail::load_source(root, move_path);
      detail::require_fresh(l, move_path);
      if (!l.file) throw NotFoundError("no annotations for " + move_path);
      TagRecord* t = l.file->find(move_id);
      if (!t) throw NotFoundError("no annotation " + move_id + " in " + move_path);
      const Anchor anchor = detail::resolve_anchor(move_addr, l.text);
      if (anchor.start > anchor.end || anchor.end.value > l.text.size()) {
        throw PreconditionError("anchor " + detail::range(anchor) + " is out of bounds");
      }
      t->anchor = anchor;
      t->context = capture_context(l.text, anchor);
      t->status = TagStatus::attached;
      const TagRecord moved = *t;
      save(*l.file, root);
      if (opt.json_out) {
        out << json{{"path", move_path}, {"annotation", to_json(moved)}}.dump(2) << "\n";
      } else {
        out << "moved " << moved.id << " to " << detail::range(moved.anchor) << "\n";
      }
      return kOk;
    }

    if (remove->parsed()) {
      auto file = load(remove_path, root);
      if (!file || !file->find(remove_id)) {
        throw NotFoundError("no annotation " + remove_id + " in " + remove_path);
      }
      std::erase_if(file->annotations, [&](const TagRecord& t) { return t.id == remove_id; });
      save(*file, root);
      out << "removed " << remove_id << "\n";
      return kOk;
    }

    if (check_cmd->parsed()) {
      if (check_paths.empty()) check_paths = list_sidecars(root);
      bool findings = false;
      json files = json::array();
      for (const auto& p : check_paths) {
        const auto state = check(p, root);
        auto file = load(p, root);
        const std::size_t orphaned = file ? detail::count_status(*file, TagStatus::orphaned) : 0;
        const std::size_t proposed = file ? detail::count_status(*file, TagStatus::proposed) : 0;
        const std::size_t total = file ? file->annotations.size() : 0;
        if (state == Freshness::stale || orphaned + proposed > 0) findings = true;
        if (opt.json_out) {
          files.push_back({{"path", p},
                           {"state", std::string(to_string(state))},
                           {"annotations", total},
                           {"orphaned", orphaned},
                           {"proposed", proposed}});
        } else {
          out << to_string(state) << "  " << p << "  (" << total << " annotations, " << orphaned
              << " orphaned";
          if (proposed) out << ", " << proposed << " proposed";
          out << ")\n";
        }
      }
      if (opt.json_out) out << json{{"files", files}, {"findings", findings}}.dump(2) << "\n";
      return findings ? kFindings : kOk;
    }

    if (re->parsed()) {
      ReattachConfig rc = config.reattach;
      if (re_threshold >= 0) rc.threshold = re_threshold;
      rc.validate();
      Strategy strategy = *parse_strategy(re_strategy);
      std::vector<std::string> warnings;
      std::shared_ptr<CompletionProvider> provider;
      if (strategy == Strategy::semantic) {
        provider = make_provider(provider_settings());
        if (!provider) {
          warnings.push_back("no completion provider configured; falling back to fuzzy matching");
          strategy = Strategy::fuzzy;
        }
      }
      auto l = detail::load_source(root, re_path);
      if (!l.file) throw NotFoundError("no annotations for " + re_path);

      std::vector<ReattachProposal> proposals;
      std::vector<Orphaned> orphans;
      for (const auto& tag : l.file->annotations) {
        if (tag.status == TagStatus::attached && anchor_matches(tag, l.text)) continue;
        if (tag.context.anchor_text.empty()) {
          orphans.push_back({tag.id, 0.0, std::nullopt});
          continue;
        }
        ReattachResult r;
        if (strategy == Strategy::semantic) {
          auto outcome = semantic_reattach_detailed(tag, l.text, provider.get(), rc);
          if (outcome.used_fallback) {
            warnings.push_back("tag " + tag.id + ": semantic re-anchoring fell back (" +
                               outcome.fallback_reason + ")");
          }
          r = std::move(outcome.result);
        } else {
          r = reattach(tag, l.text, rc, strategy != Strategy::exact);
        }
        if (auto* p = std::get_if<ReattachProposal>(&r)) proposals.push_back(*p);
        else orphans.push_back(std::get<Orphaned>(r));
      }

      for (const auto& w : warnings) err << "warning: " << w << "\n";
      if (!opt.json_out) {
        out << proposals.size() << " proposal" << (proposals.size() == 1 ? "" : "s") << "\n";
      }
      for (auto& p : proposals) {
        const TagRecord* t = l.file->find(p.tag_id);
        if (!opt.json_out) {
          out << "  " << p.tag_id << "  " << detail::range(t->anchor) << " -> " << detail::range(p.candidate)
              << "  score " << detail::fmt_score(p.score) << " (" << to_string(p.strategy) << ")  "
              << detail::preview(p.candidate_text) << "\n";
        }
        if (re_yes) {
          p.accepted = true;
        } else if (!opt.json_out) {
          out << "  apply? [y/N] " << std::flush;
          std::string answer;
          std::getline(in, answer);
          p.accepted = !answer.empty() && (answer[0] == 'y' || answer[0] == 'Y');
        }
      }
      if (!opt.json_out) {
        for (const auto& o : orphans) {
          out << "  " << o.tag_id << "  orphaned (best score " << detail::fmt_score(o.best_score) << ")\n";
        }
      }

      const bool any_accepted =
          std::any_of(proposals.begin(), proposals.end(), [](const auto& p) { return p.accepted; });
      const bool nothing_to_move = proposals.empty() && orphans.empty();
      bool saved = false;
      if (nothing_to_move || any_accepted || re_yes) {
        // Re-describe the file against the current text, then apply accepted
        // proposals. Declined ones leave their tags orphaned.
        AnnotationFile file = reconcile(*l.file, l.text);
        for (const auto& p : proposals) {
          if (p.accepted) file = confirm(p, file, l.text);
        }
        if (file != *l.file) {
          save(file, root);
          saved = true;
        }
      }
      const std::size_t unresolved =
          orphans.size() + static_cast<std::size_t>(std::count_if(
                               proposals.begin(), proposals.end(), [](const auto& p) { return !p.accepted; }));
      if (opt.json_out) {
        json ps = json::array();
        for (const auto& p : proposals) {
          json j = to_json(p);
          j["previous"] = anchor_json(l.file->find(p.tag_id)->anchor);
          ps.push_back(j);
        }
        json os = json::array();
        for (const auto& o : orphans) os.push_back({{"tagId", o.tag_id}, {"bestScore", o.best_score}});
        out << json{{"path", re_path},
                    {"proposals", ps},
                    {"orphaned", os},
                    {"saved", saved},
                    {"warnings", warnings}}
                   .dump(2)
            << "\n";
      }
      return unresolved > 0 ? kFindings : kOk;
    }

    if (apply->parsed()) {
      LayerSelection sel{layers};
      ApplyReport report = apply_layers(root, sel, layers_out);
      if (opt.json_out) {
        out << to_json(report).dump(2) << "\n";
      } else {
        for (const auto& w : report.warnings) err << "warning: " << w << "\n";
        out << "wrote " << report.files_written.size() << " files to " << layers_out << " ("
            << report.splices.size() << " insertions in " << report.files_spliced.size() << " files)\n";
      }
      return kOk;
    }

    if (serve->parsed()) {
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      HostService service({root, config.reattach, make_provider(provider_settings())});
      TcpServer tcp(service);
      const int bound = tcp.start(port);
      out << "listening on 127.0.0.1:" << bound << " (ndjson)";
      std::unique_ptr<HttpShim> http;
      if (http_port >= 0) {
        http = std::make_unique<HttpShim>(service);
        out << ", http on 127.0.0.1:" << http->start(http_port);
      }
      out << ", provider " << (service.has_provider() ? "configured" : "none") << std::endl;
      std::unique_ptr<ChangeWatcher> watcher;
      if (watch_ms > 0) watcher = std::make_unique<ChangeWatcher>(service, std::chrono::milliseconds(watch_ms));
      int sig = 0;
      sigwait(&signals, &sig);
      watcher.reset();
      if (http) http->stop();
      tcp.stop();
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kOpError;
  }
  return kUsage;
}

}  // namespace codetations::cli
