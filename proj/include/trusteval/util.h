#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace trusteval {

using Json = nlohmann::json;
using TimePoint = std::chrono::system_clock::time_point;
using Clock = std::function<TimePoint()>;

Clock SystemClock();
// Always returns the same instant; reports built under it are reproducible.
Clock FixedClock(TimePoint t);

// RFC 3339 UTC with millisecond precision.
std::string FormatTimestamp(TimePoint t);

std::string Sha256Hex(std::string_view data);
// First 16 hex chars of the SHA-256 of the compact JSON dump.
std::string JsonDigest(const Json& value);

std::string Trim(std::string_view s);
std::string ToLower(std::string_view s);
bool ContainsInsensitive(std::string_view haystack, std::string_view needle);
std::vector<std::string> Split(std::string_view s, char sep);
std::string Join(const std::vector<std::string>& parts, std::string_view sep);

std::string ReadFile(const std::filesystem::path& path);
// Writes to a sibling temp file then renames over the target.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view data);

// Reads an object-per-line file. A trailing line without a newline that fails
// to parse is treated as a torn write and ignored.
std::vector<Json> ReadJsonLines(const std::filesystem::path& path);
void AppendJsonLines(const std::filesystem::path& path,
                     const std::vector<Json>& records);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
// rethrown on the calling thread (first by index).
void ParallelFor(std::size_t n, std::size_t workers,
                 const std::function<void(std::size_t)>& fn);

// Deterministic, platform-independent draws on top of a 64-bit engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t Next();
  // Uniform in [0, 1).
  double Uniform();
  // Uniform integer in [0, bound).
  std::uint64_t Below(std::uint64_t bound);

 private:
  std::uint64_t state_[4];
};

}  // namespace trusteval
