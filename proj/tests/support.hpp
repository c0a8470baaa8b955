#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "codetations/model.hpp"
#include "codetations/store.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using codetations::json;

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / ("codetations-test-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline std::string read_file(const fs::path& p) { return codetations::read_file_bytes(p); }

// Random text over a small alphabet that includes multibyte scalars.
inline codetations::Text random_text(std::mt19937_64& rng, std::size_t len) {
  static const char32_t alphabet[] = {U'a', U'b', U'c', U'd', U' ', U'\n', U'x', U'é', U'→', U'𝄞'};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(alphabet) - 1);
  codetations::Text t;
  for (std::size_t i = 0; i < len; ++i) t.push_back(alphabet[pick(rng)]);
  return t;
}

// Every regular file under `dir` (skipping `skip` entries at any depth),
// keyed by generic relative path.
inline std::map<std::string, std::string> tree_files(const fs::path& dir,
                                                     const std::set<std::string>& skip = {}) {
  std::map<std::string, std::string> out;
  for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
    if (skip.count(it->path().filename().string())) {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file()) {
      out[it->path().lexically_relative(dir).generic_string()] = read_file(it->path());
    }
  }
  return out;
}

inline json random_json_value(std::mt19937_64& rng, int depth = 0) {
  switch (std::uniform_int_distribution<int>(0, depth > 1 ? 3 : 5)(rng)) {
    case 0: return static_cast<std::int64_t>(rng() % 100000) - 50000;
    case 1: return codetations::encode_utf8(random_text(rng, rng() % 12));
    case 2: return rng() % 2 == 0;
    case 3: return 0.25 * static_cast<double>(rng() % 64);
    case 4: {
      json arr = json::array();
      for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) arr.push_back(random_json_value(rng, depth + 1));
      return arr;
    }
    default: {
      json obj = json::object();
      for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) {
        obj["k" + std::to_string(rng() % 50)] = random_json_value(rng, depth + 1);
      }
      return obj;
    }
  }
}

// A document and a structurally valid annotation file for it, with unknown
// keys sprinkled over the file and its records.
inline std::pair<codetations::Text, codetations::AnnotationFile> random_annotation_file(
    std::mt19937_64& rng, const std::string& path) {
  using namespace codetations;
  const Text doc = random_text(rng, 1 + rng() % 400);
  AnnotationFile file;
  file.document = {path, sha256_hex(encode_utf8(doc))};
  if (rng() % 2) file.extra["x-client"] = random_json_value(rng);
  const int tags = static_cast<int>(rng() % 6);
  for (int i = 0; i < tags; ++i) {
    std::size_t s = rng() % (doc.size() + 1);
    std::size_t e = s + rng() % (doc.size() - s + 1);
    TagRecord t = make_tag(doc, make_anchor(s, e), rng() % 3 ? "comment" : "lm-unit-test",
                           random_json_value(rng), make_uuid_v4(rng));
    t.status = static_cast<TagStatus>(rng() % 3);
    if (rng() % 3 == 0) t.extra["x-color"] = "#" + std::to_string(rng() % 999999);
    if (rng() % 4 == 0) t.extra["x-nested"] = random_json_value(rng);
    file.annotations.push_back(std::move(t));
  }
  return {doc, file};
}

// Validates `instance` against $defs/`def` of the committed JSON Schema using
// Python's jsonschema. Returns the error text; empty when valid.
inline std::string schema_errors(const std::string& def, const json& instance) {
  const std::string source_dir = CODETATIONS_SOURCE_DIR;
  TempDir dir;
  const fs::path input = dir.path() / "instance.json";
  const fs::path output = dir.path() / "errors.txt";
  write_file(input, instance.dump());
  const std::string cmd = "python3 '" + source_dir + "/tools/validate_json.py' '" + source_dir +
                          "/docs/schemas/codetations.schema.json' " + def + " < '" + input.string() +
                          "' > '" + output.string() + "' 2>&1";
  const int rc = std::system(cmd.c_str());
  std::string errors = fs::exists(output) ? read_file(output) : std::string();
  if (rc != 0 && errors.empty()) errors = "validator failed with status " + std::to_string(rc);
  return rc == 0 ? std::string() : errors;
}

// Minimal newline-delimited JSON client for the TCP transport.
class LineClient {
 public:
  explicit LineClient(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      throw std::runtime_error("connect failed");
    }
  }
  ~LineClient() { ::close(fd_); }
  LineClient(const LineClient&) = delete;
  LineClient& operator=(const LineClient&) = delete;

  void send(const json& j) {
    std::string line = j.dump() + "\n";
    ::send(fd_, line.data(), line.size(), MSG_NOSIGNAL);
  }

  json read() {
    std::size_t nl;
    while ((nl = buffer_.find('\n')) == std::string::npos) {
      char chunk[4096];
      ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) throw std::runtime_error("connection closed");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
    std::string line = buffer_.substr(0, nl);
    buffer_.erase(0, nl + 1);
    return json::parse(line);
  }

  // Sends a request and returns its response, setting aside interleaved events.
  json call(json request, std::vector<json>* events = nullptr) {
    static int counter = 0;
    const std::string id = "r" + std::to_string(++counter);
    request["requestId"] = id;
    send(request);
    while (true) {
      json msg = read();
      if (msg.contains("event")) {
        if (events) events->push_back(msg);
        continue;
      }
      if (msg.value("requestId", json(nullptr)) == json(id)) return msg;
    }
  }

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace testing_support
