#pragma once

// Layered documents. An "add-layer" tag carries {"layerName", "insertText"};
// apply_layers() materializes a copy of the repository with the insertions of
// the selected layers spliced in at their anchors' start offsets. The source
// tree and the store are only read.

#include <algorithm>
#include <map>
#include <set>
#include <tuple>
#include <string>
#include <vector>

#include "codetations/model.hpp"
#include "codetations/store.hpp"

namespace codetations {

inline constexpr std::string_view kAddLayerType = "add-layer";

struct LayerInsertion {
  std::string layer_name;
  std::string insert_text;
};

/// Interprets an add-layer tag's data. Throws PreconditionError when
/// `layerName` (non-empty string) or `insertText` (string) is missing.
inline LayerInsertion parse_layer_insertion(const TagRecord& tag) {
  if (tag.annotation_type != kAddLayerType) {
    throw PreconditionError("tag " + tag.id + " is not an add-layer annotation");
  }
  const json& d = tag.data;
  if (!d.is_object()) throw PreconditionError("tag " + tag.id + ": add-layer data must be an object");
  auto name = d.find("layerName");
  auto text = d.find("insertText");
  if (name == d.end() || !name->is_string() || name->get<std::string>().empty()) {
    throw PreconditionError("tag " + tag.id + ": add-layer data needs a non-empty 'layerName'");
  }
  if (text == d.end() || !text->is_string()) {
    throw PreconditionError("tag " + tag.id + ": add-layer data needs a string 'insertText'");
  }
  return {name->get<std::string>(), text->get<std::string>()};
}

struct LayerEntry {
  std::string source;
  std::size_t offset = 0;  // anchor start, scalar values
  std::string insert_text;
  std::string tag_id;

  friend bool operator==(const LayerEntry&, const LayerEntry&) = default;
};

struct LayerCollection {
  std::map<std::string, std::vector<LayerEntry>> layers;
  std::vector<std::string> warnings;
};

/// Reads every sidecar and groups attached add-layer tags by layer name.
inline LayerCollection collect_layers(const StoreRoot& root) {
  LayerCollection out;
  for (const auto& source : list_sidecars(root)) {
    std::optional<AnnotationFile> file;
    try {
      file = load(source, root);
    } catch (const StoreError& e) {
      out.warnings.push_back(e.what());
      continue;
    }
    if (!file) continue;
    for (const auto& tag : file->annotations) {
      if (tag.annotation_type != kAddLayerType) continue;
      if (tag.status != TagStatus::attached) {
        out.warnings.push_back(source + ": add-layer tag " + tag.id + " is " +
                               std::string(to_string(tag.status)) + "; skipped");
        continue;
      }
      try {
        auto ins = parse_layer_insertion(tag);
        out.layers[ins.layer_name].push_back(
            {source, tag.anchor.start.value, std::move(ins.insert_text), tag.id});
      } catch (const PreconditionError& e) {
        out.warnings.push_back(source + ": " + e.what() + "; skipped");
      }
    }
  }
  for (auto& [name, entries] : out.layers) {
    std::sort(entries.begin(), entries.end(), [](const LayerEntry& a, const LayerEntry& b) {
      return std::tie(a.source, a.offset, a.tag_id) < std::tie(b.source, b.offset, b.tag_id);
    });
  }
  return out;
}

struct LayerSelection {
  std::vector<std::string> active_layers;

  void validate() const {
    std::set<std::string> seen;
    for (const auto& n : active_layers) {
      if (n.empty()) throw PreconditionError("empty layer name in selection");
      if (!seen.insert(n).second) throw PreconditionError("layer '" + n + "' selected twice");
    }
  }
};

/// One applied insertion. Output offsets are in scalar values of the written
/// file, so deleting [output_start, output_end) of every splice restores the
/// original text.
struct Splice {
  std::string source;
  std::string layer;
  std::string tag_id;
  std::size_t original_offset = 0;
  std::size_t output_start = 0;
  std::size_t output_end = 0;
};

struct ApplyReport {
  std::vector<std::string> files_written;  // every file in the output tree
  std::vector<std::string> files_spliced;
  std::vector<Splice> splices;
  std::vector<std::string> warnings;
};

inline json to_json(const ApplyReport& r) {
  json splices = json::array();
  for (const auto& s : r.splices) {
    splices.push_back({{"path", s.source},
                       {"layer", s.layer},
                       {"tagId", s.tag_id},
                       {"originalOffset", s.original_offset},
                       {"outputStart", s.output_start},
                       {"outputEnd", s.output_end}});
  }
  return json{{"filesWritten", r.files_written.size()},
              {"filesSpliced", r.files_spliced},
              {"insertionsApplied", r.splices.size()},
              {"splices", std::move(splices)},
              {"warnings", r.warnings}};
}

namespace detail {

struct PendingInsert {
  std::size_t offset;
  std::size_t layer_rank;
  std::string tag_id;
  std::string layer;
  std::string text;
};

}  // namespace detail

/// Splices sorted insertions into `original` in one pass. Offsets refer to the
/// original text.
inline Text splice_text(TextView original, std::vector<detail::PendingInsert>& inserts,
                        const std::string& source, std::vector<Splice>& splices) {
  std::sort(inserts.begin(), inserts.end(), [](const auto& a, const auto& b) {
    return std::tie(a.offset, a.layer_rank, a.tag_id) < std::tie(b.offset, b.layer_rank, b.tag_id);
  });
  Text out;
  std::size_t copied = 0;
  for (const auto& ins : inserts) {
    if (ins.offset > original.size()) {
      throw PreconditionError(source + ": insertion offset " + std::to_string(ins.offset) +
                              " beyond end of file");
    }
    out.append(original.substr(copied, ins.offset - copied));
    copied = ins.offset;
    const Text text = decode_utf8(ins.text);
    Splice s{source, ins.layer, ins.tag_id, ins.offset, out.size(), 0};
    out.append(text);
    s.output_end = out.size();
    splices.push_back(std::move(s));
  }
  out.append(original.substr(copied));
  return out;
}

/// Writes an alternate version of the repository into `output_dir` with the
/// selected layers applied. `.git`, `.codetations` and the output directory
/// itself are not copied. Throws StaleError (before writing anything) when a
/// file that would receive insertions has changed since it was annotated.
inline ApplyReport apply_layers(const StoreRoot& root, const LayerSelection& selection,
                                const fs::path& output_dir) {
  selection.validate();
  const fs::path out_root = fs::weakly_canonical(fs::absolute(output_dir));
  std::error_code ec;
  if (fs::exists(out_root, ec)) {
    if (!fs::is_directory(out_root) || !fs::is_empty(out_root)) {
      throw PreconditionError("output directory must be empty or absent: " + out_root.string());
    }
  }
  if (out_root == root.repo_root) throw PreconditionError("output directory is the repository root");

  ApplyReport report;
  LayerCollection collected = collect_layers(root);
  report.warnings = collected.warnings;

  std::map<std::string, std::vector<detail::PendingInsert>> per_file;
  for (std::size_t rank = 0; rank < selection.active_layers.size(); ++rank) {
    const auto& name = selection.active_layers[rank];
    auto it = collected.layers.find(name);
    if (it == collected.layers.end()) {
      report.warnings.push_back("layer '" + name + "' has no insertions");
      continue;
    }
    for (const auto& e : it->second) {
      per_file[e.source].push_back({e.offset, rank, e.tag_id, name, e.insert_text});
    }
  }

  for (const auto& [source, inserts] : per_file) {
    if (check(source, root) != Freshness::fresh) {
      throw StaleError(source + " changed since it was annotated; re-anchor before applying layers");
    }
  }

  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root.repo_root);
       it != fs::recursive_directory_iterator(); ++it) {
    const fs::path& p = it->path();
    if (it->is_directory()) {
      const auto name = p.filename().string();
      if (name == ".git" || name == kStoreDirName || p == out_root) it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() || it->is_symlink()) files.push_back(p);
  }
  std::sort(files.begin(), files.end());

  for (const auto& p : files) {
    const std::string rel = p.lexically_relative(root.repo_root).generic_string();
    const fs::path dest = out_root / fs::path(rel);
    fs::create_directories(dest.parent_path());
    auto pending = per_file.find(rel);
    if (pending == per_file.end()) {
      if (fs::is_symlink(fs::symlink_status(p))) {
        fs::copy_symlink(p, dest);
      } else {
        fs::copy_file(p, dest, fs::copy_options::overwrite_existing);
      }
    } else {
      const Text original = decode_utf8(read_file_bytes(p));
      const Text woven = splice_text(original, pending->second, rel, report.splices);
      write_file_atomic(dest, encode_utf8(woven));
      report.files_spliced.push_back(rel);
    }
    report.files_written.push_back(rel);
  }
  return report;
}

}  // namespace codetations
