#pragma once

// Token traces: one generated sequence with the probability of every token
// under the clean and the noised conditioning, plus the JSON-lines file format
// used to exchange them with external trace producers.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "visdep/errors.hpp"

namespace visdep {

using TokenId = std::int64_t;

struct TokenTrace {
  std::string sample_id;
  std::vector<TokenId> tokens;
  std::vector<std::string> surfaces;
  std::vector<double> p_clean;  // p(y_t | y_<t, clean condition)
  std::vector<double> p_noisy;  // p(y_t | y_<t, noised condition)
  std::optional<std::size_t> eos_index;

  std::size_t size() const { return tokens.size(); }

  bool operator==(const TokenTrace&) const = default;
};

struct TraceHeader {
  int version = 1;
  int noise_step = 900;
  std::string generator;  // free-form producer description; may be empty

  bool operator==(const TraceHeader&) const = default;
};

struct TraceFile {
  TraceHeader header;
  std::vector<TokenTrace> traces;

  bool operator==(const TraceFile&) const = default;
};

inline constexpr const char* kTraceFormat = "visdep-trace";
inline constexpr int kTraceVersion = 1;

/// Throws DataError naming the sample and the offending field.
inline void validate(const TokenTrace& t) {
  const auto fail = [&](const std::string& what) {
    throw DataError("trace '" + t.sample_id + "': " + what);
  };
  const std::size_t n = t.tokens.size();
  if (n == 0) fail("tokens: empty sequence");
  if (t.surfaces.size() != n) fail("surfaces: length differs from tokens");
  if (t.p_clean.size() != n) fail("p_clean: length differs from tokens");
  if (t.p_noisy.size() != n) fail("p_noisy: length differs from tokens");
  for (std::size_t i = 0; i < n; ++i) {
    if (t.tokens[i] < 0) fail("tokens[" + std::to_string(i) + "]: negative id");
    const double pc = t.p_clean[i];
    const double pn = t.p_noisy[i];
    if (!(pc >= 0.0 && pc <= 1.0)) fail("p_clean[" + std::to_string(i) + "] out of [0,1]");
    if (!(pn >= 0.0 && pn <= 1.0)) fail("p_noisy[" + std::to_string(i) + "] out of [0,1]");
  }
  if (t.eos_index && *t.eos_index != n - 1) fail("eos_index: must be the last index");
}

inline void validate(const TraceFile& f) {
  std::set<std::string> seen;
  for (const auto& t : f.traces) {
    validate(t);
    if (!seen.insert(t.sample_id).second) {
      throw DataError("trace '" + t.sample_id + "': duplicate sample_id");
    }
  }
}

namespace detail {

inline nlohmann::json to_json(const TokenTrace& t) {
  nlohmann::json j;
  j["sample_id"] = t.sample_id;
  j["tokens"] = t.tokens;
  j["surfaces"] = t.surfaces;
  j["p_clean"] = t.p_clean;
  j["p_noisy"] = t.p_noisy;
  j["eos_index"] = t.eos_index ? nlohmann::json(*t.eos_index) : nlohmann::json(nullptr);
  return j;
}

template <typename T>
std::vector<T> get_array(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw DataError(std::string("missing or non-array field '") + key + "'");
  }
  std::vector<T> out;
  out.reserve(j.at(key).size());
  for (const auto& v : j.at(key)) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw DataError(std::string("field '") + key + "': expected strings");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw DataError(std::string("field '") + key + "': expected integers");
    } else {
      if (!v.is_number()) throw DataError(std::string("field '") + key + "': expected numbers");
    }
    out.push_back(v.get<T>());
  }
  return out;
}

inline TokenTrace trace_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  TokenTrace t;
  if (!j.contains("sample_id") || !j.at("sample_id").is_string()) {
    throw DataError("missing or non-string field 'sample_id'");
  }
  t.sample_id = j.at("sample_id").get<std::string>();
  t.tokens = get_array<TokenId>(j, "tokens");
  t.surfaces = get_array<std::string>(j, "surfaces");
  t.p_clean = get_array<double>(j, "p_clean");
  t.p_noisy = get_array<double>(j, "p_noisy");
  if (j.contains("eos_index") && !j.at("eos_index").is_null()) {
    const auto& e = j.at("eos_index");
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
      throw DataError("field 'eos_index': expected non-negative integer or null");
    }
    t.eos_index = e.get<std::size_t>();
  }
  return t;
}

}  // namespace detail

/// Reads a JSON-lines trace file. A zero-byte file is an empty TraceFile;
/// otherwise the first line must be the format header.
inline TraceFile read_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace file: " + path.string());
  TraceFile file;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "parse error: " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kTraceFormat) {
        throw DataError(where + "missing visdep-trace header line");
      }
      if (j.value("version", 0) != kTraceVersion) {
        throw DataError(where + "unsupported trace version");
      }
      if (!j.contains("noise_step") || !j.at("noise_step").is_number_integer()) {
        throw DataError(where + "header lacks integer noise_step");
      }
      file.header.version = kTraceVersion;
      file.header.noise_step = j.at("noise_step").get<int>();
      file.header.generator = j.value("generator", "");
      have_header = true;
      continue;
    }
    TokenTrace t;
    try {
      t = detail::trace_from_json(j);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
    try {
      validate(t);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!seen.insert(t.sample_id).second) {
      throw DataError(where + "trace '" + t.sample_id + "': duplicate sample_id");
    }
    file.traces.push_back(std::move(t));
  }
  return file;
}

inline std::string header_line(const TraceHeader& h) {
  nlohmann::json j;
  j["format"] = kTraceFormat;
  j["version"] = kTraceVersion;
  j["noise_step"] = h.noise_step;
  if (!h.generator.empty()) j["generator"] = h.generator;
  return j.dump();
}

inline void write_traces(const TraceFile& file, const std::filesystem::path& path) {
  validate(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write trace file: " + path.string());
  out << header_line(file.header) << '\n';
  for (const auto& t : file.traces) out << detail::to_json(t).dump() << '\n';
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace visdep
