#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace capsrl {

// Formats a double with 17 significant digits (%.17g): enough to round-trip
// any IEEE-754 double bit-exactly through text. All reals in output files go
// through this function so repeated runs produce byte-identical files.
std::string format_real(double x);

// Parses a real/integer field; throws SchemaError naming `context` on failure.
double parse_real(std::string_view text, const std::string& context);
long long parse_int(std::string_view text, const std::string& context);

std::string read_file(const std::filesystem::path& path);

// Writes content to a temporary sibling file and renames it into place, so an
// interrupted run never leaves a half-written file at the final path.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// 64-bit FNV-1a; used for dataset/artifact provenance hashes and RNG stream
// derivation. Stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

std::string hex64(std::uint64_t value);

// Minimal JSON emitter. nlohmann::json is used for parsing, but emission is
// hand-rolled so every real goes through format_real (the library picks the
// shortest representation instead of a fixed digit count).
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(std::string_view name);
  JsonWriter& value(double v);
  JsonWriter& value(long long v);
  JsonWriter& value(int v) { return value(static_cast<long long>(v)); }
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(bool v);
  JsonWriter& value(std::string_view v);
  // Without this overload a string literal would convert pointer-to-bool and
  // silently hit value(bool).
  JsonWriter& value(const char* v) { return value(std::string_view(v)); }
  JsonWriter& value_raw(std::string_view json_fragment);
  JsonWriter& real_array(const std::vector<double>& values);
  JsonWriter& int_array(const std::vector<int>& values);
  std::string str() const { return out_; }

 private:
  void separator();
  std::string out_;
  std::vector<bool> needs_comma_;
  bool pending_key_ = false;
};

std::string json_escape(std::string_view text);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to preallocated per-index slots so the reduction is order
// independent; the call blocks until every index has run. workers <= 1 runs
// inline. Exceptions from fn are rethrown on the calling thread.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace capsrl
