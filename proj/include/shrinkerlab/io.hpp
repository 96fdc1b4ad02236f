#pragma once

// Deterministic artifact encoding: CSV with fixed float formatting, JSON
// with stable key order, content digests, and run manifests.  Identical
// inputs must produce byte-identical files, so every float goes through
// one formatting routine and JSON objects keep insertion order.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace shrinkerlab::io {

using ordered_json = nlohmann::ordered_json;

// 17 significant digits round-trips every double exactly
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string digest_hex(std::string_view bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

inline void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) throw ValidationError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Row-oriented CSV accumulator; every cell is pre-formatted text.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

  Csv& row(std::vector<std::string> cells) {
    if (cells.size() != header_.size())
      throw ValidationError("csv row width does not match the header");
    rows_.push_back(std::move(cells));
    return *this;
  }

  std::string str() const {
    std::string out = join(header_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string cell(double v) { return fmt17(v); }
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }

inline ordered_json report_json(const AuditReport& rep) {
  ordered_json j;
  j["name"] = rep.name;
  j["passed"] = rep.passed;
  ordered_json metrics = ordered_json::object();
  for (const auto& [k, v] : rep.metrics) metrics[k] = v;
  j["metrics"] = metrics;
  j["flags"] = rep.flags;
  j["notes"] = rep.notes;
  return j;
}

template <class S>
ordered_json vec_json(const Vec<S>& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(double(v[i]));
  return arr;
}

// Tracks files written during one run and renders the manifest.
class RunArtifacts {
 public:
  RunArtifacts(std::filesystem::path dir, std::string command, ordered_json config)
      : dir_(std::move(dir)), command_(std::move(command)), config_(std::move(config)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::size_t output_count() const { return outputs_.size(); }

  void emit(const std::string& name, std::string_view content) {
    write_text(dir_ / name, content);
    outputs_.push_back({name, digest_hex(content), content.size()});
  }

  void emit_json(const std::string& name, const ordered_json& j) { emit(name, j.dump(2) + "\n"); }

  void write_manifest(const std::string& version) {
    ordered_json m;
    m["tool"] = "shrinkerlab";
    m["version"] = version;
    m["command"] = command_;
    m["config"] = config_;
    m["config_digest"] = digest_hex(config_.dump());
    ordered_json outs = ordered_json::array();
    for (const auto& o : outputs_) {
      ordered_json e;
      e["path"] = o.name;
      e["digest"] = o.digest;
      e["bytes"] = o.bytes;
      outs.push_back(e);
    }
    m["outputs"] = outs;
    write_text(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  struct Output {
    std::string name;
    std::string digest;
    size_t bytes;
  };
  std::filesystem::path dir_;
  std::string command_;
  ordered_json config_;
  std::vector<Output> outputs_;
};

}  // namespace shrinkerlab::io
