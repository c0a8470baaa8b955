#pragma once

// Sidecar persistence. Each annotated source file `p` gets a JSON file at
// `.codetations/<p>.annotations.json` under the repository root; the
// `.codetations` tree is created on the first write.
//
// Files are written canonically (sorted keys, two-space indent, trailing
// newline, annotations ordered by (anchor.start, id)) so identical content is
// always byte-identical, and atomically (temp file + rename).

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "codetations/model.hpp"

namespace codetations {

namespace fs = std::filesystem;

inline constexpr std::string_view kStoreDirName = ".codetations";
inline constexpr std::string_view kSidecarSuffix = ".annotations.json";

/// Throws PathError unless `path` is a clean repo-relative path: forward
/// slashes, no empty, `.` or `..` segments, not absolute.
inline void check_repo_path(std::string_view path) {
  if (path.empty()) throw PathError("empty path");
  if (path.front() == '/') throw PathError("path must be repo-relative: " + std::string(path));
  if (path.find('\\') != std::string_view::npos) {
    throw PathError("path must use forward slashes: " + std::string(path));
  }
  std::size_t begin = 0;
  while (begin <= path.size()) {
    const std::size_t slash = path.find('/', begin);
    const std::size_t end = slash == std::string_view::npos ? path.size() : slash;
    const auto seg = path.substr(begin, end - begin);
    if (seg.empty() || seg == "." || seg == "..") {
      throw PathError("path escapes or is not normalized within the repository: " +
                      std::string(path));
    }
    if (slash == std::string_view::npos) break;
    begin = slash + 1;
  }
}

/// ".codetations/" + source + ".annotations.json"
inline std::string sidecar_path(std::string_view source) {
  check_repo_path(source);
  return std::string(kStoreDirName) + "/" + std::string(source) + std::string(kSidecarSuffix);
}

struct StoreRoot {
  fs::path repo_root;
  fs::path store_dir;

  StoreRoot() = default;
  explicit StoreRoot(const fs::path& root)
      : repo_root(fs::weakly_canonical(fs::absolute(root))),
        store_dir(repo_root / std::string(kStoreDirName)) {}

  [[nodiscard]] fs::path source_file(std::string_view source) const {
    check_repo_path(source);
    return repo_root / fs::path(std::string(source));
  }
  [[nodiscard]] fs::path sidecar_file(std::string_view source) const {
    return repo_root / fs::path(sidecar_path(source));
  }
};

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw StoreError("read failed for " + path.string());
  return ss.str();
}

namespace detail {

inline void write_all(int fd, std::string_view bytes, const fs::path& path) {
  const char* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError("write failed for " + path.string() + ": " + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

inline std::string temp_suffix() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s = ".tmp-";
  for (int i = 0; i < 12; ++i) s.push_back(kHex[rng() & 0xF]);
  return s;
}

}  // namespace detail

/// First half of an atomic write: the bytes land in a synced temp file next to
/// `target`. Parent directories are created as needed.
inline fs::path stage_file(const fs::path& target, std::string_view bytes) {
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw StoreError("cannot create directory " + target.parent_path().string() + ": " + ec.message());
  fs::path temp = target;
  temp += detail::temp_suffix();
  const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw StoreError("cannot create " + temp.string() + ": " + std::strerror(errno));
  try {
    detail::write_all(fd, bytes, temp);
    if (::fsync(fd) != 0) throw StoreError("fsync failed for " + temp.string());
  } catch (...) {
    ::close(fd);
    fs::remove(temp, ec);
    throw;
  }
  ::close(fd);
  return temp;
}

/// Second half: rename over the target.
inline void commit_file(const fs::path& temp, const fs::path& target) {
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw StoreError("cannot replace " + target.string() + ": " + ec.message());
  }
}

inline void write_file_atomic(const fs::path& target, std::string_view bytes) {
  commit_file(stage_file(target, bytes), target);
}

// ---------------------------------------------------------------------------
// JSON mapping

inline json to_json(const TagRecord& tag) {
  json j = tag.extra.is_object() ? tag.extra : json::object();
  j["id"] = tag.id;
  j["anchor"] = {{"start", tag.anchor.start.value}, {"end", tag.anchor.end.value}};
  j["context"] = {{"anchorText", tag.context.anchor_text},
                  {"prefix", tag.context.prefix},
                  {"suffix", tag.context.suffix}};
  j["annotationType"] = tag.annotation_type;
  j["status"] = std::string(to_string(tag.status));
  j["data"] = tag.data;
  return j;
}

inline json to_json(const AnnotationFile& file) {
  AnnotationFile sorted = file;
  sort_annotations(sorted);
  json j = file.extra.is_object() ? file.extra : json::object();
  j["formatVersion"] = file.format_version;
  j["document"] = {{"path", file.document.path}, {"digest", file.document.digest}};
  json arr = json::array();
  for (const auto& t : sorted.annotations) arr.push_back(to_json(t));
  j["annotations"] = std::move(arr);
  return j;
}

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw PreconditionError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw PreconditionError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::size_t require_offset(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw PreconditionError(where + ": field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace detail

inline TagRecord tag_from_json(const json& j) {
  if (!j.is_object()) throw PreconditionError("tag record must be an object");
  TagRecord tag;
  tag.id = detail::require_string(j, "id", "tag");
  const std::string where = "tag " + tag.id;
  const json& anchor = detail::require(j, "anchor", where);
  if (!anchor.is_object()) throw PreconditionError(where + ": anchor must be an object");
  tag.anchor = make_anchor(detail::require_offset(anchor, "start", where),
                           detail::require_offset(anchor, "end", where));
  const json& ctx = detail::require(j, "context", where);
  if (!ctx.is_object()) throw PreconditionError(where + ": context must be an object");
  tag.context.anchor_text = detail::require_string(ctx, "anchorText", where);
  tag.context.prefix = detail::require_string(ctx, "prefix", where);
  tag.context.suffix = detail::require_string(ctx, "suffix", where);
  tag.annotation_type = detail::require_string(j, "annotationType", where);
  const auto status = parse_status(detail::require_string(j, "status", where));
  if (!status) throw PreconditionError(where + ": unknown status");
  tag.status = *status;
  tag.data = j.contains("data") ? j.at("data") : json(nullptr);
  tag.extra = json::object();
  for (const auto& [key, value] : j.items()) {
    if (key != "id" && key != "anchor" && key != "context" && key != "annotationType" &&
        key != "status" && key != "data") {
      tag.extra[key] = value;
    }
  }
  return tag;
}

inline AnnotationFile annotation_file_from_json(const json& j) {
  if (!j.is_object()) throw PreconditionError("annotation file must be a JSON object");
  AnnotationFile file;
  const json& version = detail::require(j, "formatVersion", "annotation file");
  if (!version.is_number_integer()) throw PreconditionError("formatVersion must be an integer");
  file.format_version = version.get<int>();
  if (file.format_version > kFormatVersion) {
    throw PreconditionError("formatVersion " + std::to_string(file.format_version) +
                            " is newer than supported version " + std::to_string(kFormatVersion));
  }
  if (file.format_version < 1) throw PreconditionError("formatVersion must be >= 1");
  const json& doc = detail::require(j, "document", "annotation file");
  file.document.path = detail::require_string(doc, "path", "document");
  file.document.digest = detail::require_string(doc, "digest", "document");
  const json& arr = detail::require(j, "annotations", "annotation file");
  if (!arr.is_array()) throw PreconditionError("annotations must be an array");
  for (const auto& t : arr) file.annotations.push_back(tag_from_json(t));
  for (const auto& [key, value] : j.items()) {
    if (key != "formatVersion" && key != "document" && key != "annotations") file.extra[key] = value;
  }
  return file;
}

/// Canonical bytes of a sidecar.
inline std::string serialize(const AnnotationFile& file) {
  return to_json(file).dump(2, ' ', false, json::error_handler_t::strict) + "\n";
}

/// Structural checks run before anything is written.
inline void check_structure(const AnnotationFile& file) {
  check_repo_path(file.document.path);
  if (!is_sha256_hex(file.document.digest)) {
    throw PreconditionError("document digest must be 64 lowercase hex characters");
  }
  std::set<std::string> ids;
  for (const auto& t : file.annotations) {
    if (!is_uuid_v4(t.id)) throw PreconditionError("invalid tag id '" + t.id + "'");
    if (!ids.insert(t.id).second) throw PreconditionError("duplicate tag id " + t.id);
    if (t.anchor.start > t.anchor.end) throw PreconditionError("tag " + t.id + ": start after end");
    if (t.annotation_type.empty()) throw PreconditionError("tag " + t.id + ": empty annotation type");
  }
}

// ---------------------------------------------------------------------------
// Store operations

/// Writes the sidecar into a temp file beside its final location and returns
/// the temp path. Nothing is visible to readers until commit_file().
inline fs::path stage_sidecar(const AnnotationFile& file, const StoreRoot& root) {
  check_structure(file);
  return stage_file(root.sidecar_file(file.document.path), serialize(file));
}

inline void save(const AnnotationFile& file, const StoreRoot& root) {
  const fs::path temp = stage_sidecar(file, root);
  commit_file(temp, root.sidecar_file(file.document.path));
}

/// Loads the sidecar for `source`; std::nullopt when there is none.
inline std::optional<AnnotationFile> load(std::string_view source, const StoreRoot& root) {
  const fs::path path = root.sidecar_file(source);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  const std::string bytes = read_file_bytes(path);
  try {
    return annotation_file_from_json(json::parse(bytes));
  } catch (const json::exception& e) {
    throw StoreError("malformed sidecar " + path.string() + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw StoreError("invalid sidecar " + path.string() + ": " + e.what());
  }
}

enum class Freshness { fresh, stale, absent };

inline std::string_view to_string(Freshness f) {
  switch (f) {
    case Freshness::fresh: return "fresh";
    case Freshness::stale: return "stale";
    case Freshness::absent: return "absent";
  }
  return "absent";
}

/// Digest of the current source bytes; throws StoreError if unreadable.
inline std::string source_digest(std::string_view source, const StoreRoot& root) {
  return sha256_hex(read_file_bytes(root.source_file(source)));
}

inline Freshness check(std::string_view source, const StoreRoot& root) {
  auto file = load(source, root);
  const std::string digest = source_digest(source, root);
  if (!file) return Freshness::absent;
  return file->document.digest == digest ? Freshness::fresh : Freshness::stale;
}

/// Repo-relative source paths of every sidecar in the store, sorted.
inline std::vector<std::string> list_sidecars(const StoreRoot& root) {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(root.store_dir, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(root.store_dir, ec);
       !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const std::string rel = fs::relative(it->path(), root.store_dir).generic_string();
    if (rel.size() <= kSidecarSuffix.size() ||
        rel.compare(rel.size() - kSidecarSuffix.size(), kSidecarSuffix.size(), kSidecarSuffix) != 0) {
      continue;
    }
    out.push_back(rel.substr(0, rel.size() - kSidecarSuffix.size()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace codetations
