#pragma once

// CSV/JSON persistence, SHA-256 checksums and run manifests.

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sburgers/config.hpp"
#include "sburgers/noise.hpp"

namespace sburgers {

inline constexpr const char* version_tag = "sburgers 0.1.0";

/// Shortest-round-trip-safe decimal: 17 significant digits.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Single writer per file; rows are written in call order.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    row_strings(header);
  }

  void row(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
    out_ << '\n';
  }

  void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed");
  }

 private:
  std::ofstream out_;
};

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Binary increment log: "SBINC1\0\0", u64 K, u64 steps, f64 dt, then per step dW0, dW_1..dW_K
/// as little-endian doubles.
class IncrementDump {
 public:
  IncrementDump(const std::filesystem::path& path, std::size_t K, std::size_t steps, double dt)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out_.write("SBINC1\0\0", 8);
    const std::uint64_t k = K, n = steps;
    out_.write(reinterpret_cast<const char*>(&k), 8);
    out_.write(reinterpret_cast<const char*>(&n), 8);
    out_.write(reinterpret_cast<const char*>(&dt), 8);
  }

  void write(const NoiseIncrement& inc) {
    out_.write(reinterpret_cast<const char*>(&inc.dW0), 8);
    out_.write(reinterpret_cast<const char*>(inc.dW.data()), static_cast<std::streamsize>(8 * inc.dW.size()));
  }

  void close() { out_.close(); }

 private:
  std::ofstream out_;
};

/// Collects outputs of one run and writes manifest.json with their checksums.
class RunManifest {
 public:
  RunManifest(std::filesystem::path dir, std::string subcommand, const RunConfig& cfg)
      : dir_(std::move(dir)),
        start_(std::chrono::steady_clock::now()),
        doc_{{"tool", version_tag},
             {"subcommand", std::move(subcommand)},
             {"started_utc", utc_timestamp()},
             {"config", to_json(cfg)},
             {"rng", {{"engine", "mt19937_64 via seed_seq(seed_lo, seed_hi, stream_lo, stream_hi)"},
                      {"normals", "Box-Muller, cos then sin"}}},
             {"files", json::object()},
             {"summary", json::object()}} {}

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  /// Records the per-path (seed, stream_id) pairs as a contiguous stream range.
  void seeds(std::uint64_t seed, std::uint64_t first_stream, std::uint64_t count, const std::string& role) {
    doc_["seeds"][role] = {{"seed", seed}, {"stream_first", first_stream}, {"stream_count", count}};
  }

  json& summary() { return doc_["summary"]; }

  void add_file(const std::string& name) { doc_["files"][name] = sha256_file(dir_ / name); }

  void write(int exit_status) {
    doc_["exit_status"] = exit_status;
    doc_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json(dir_ / "manifest.json", doc_);
  }

  const json& document() const noexcept { return doc_; }

 private:
  std::filesystem::path dir_;
  std::chrono::steady_clock::time_point start_;
  json doc_;
};

}  // namespace sburgers
