#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsattn/core.hpp"

namespace bsattn {

using json = nlohmann::ordered_json;

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

inline json config_echo(const PipelineConfig& config) {
  return json{{"block_size", config.block_size},
              {"alpha", config.alpha},
              {"sink_tokens", config.sink_tokens},
              {"window_tokens", config.window_tokens},
              {"scale", config.scale},
              {"epsilon", config.epsilon},
              {"rng_seed", config.rng_seed}};
}

inline std::string config_hash(const PipelineConfig& config) {
  return fnv1a_hex(config_echo(config).dump());
}

namespace detail {

inline void flatten_into(const json& node, const std::string& prefix,
                         std::vector<std::pair<std::string, json>>& out) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items())
      flatten_into(value, prefix.empty() ? key : prefix + "." + key, out);
  } else if (node.is_array()) {
    std::size_t index = 0;
    for (const auto& value : node) flatten_into(value, prefix + "[" + std::to_string(index++) + "]", out);
  } else {
    out.emplace_back(prefix, node);
  }
}

// Cells are rendered with json dump so CSV text matches the JSON emission
// byte for byte; strings stay json-quoted, which also keeps them CSV-safe.
inline std::string csv_cell(const json& value) { return value.dump(); }

}  // namespace detail

// Flat CSV rendering of a report. A report carrying a "cells" array becomes
// one row per cell (plus shared top-level scalars repeated per row); any
// other report becomes a single row.
inline std::string report_to_csv(const json& report) {
  std::vector<json> rows;
  json shared = report;
  if (report.contains("cells") && report["cells"].is_array()) {
    shared.erase("cells");
    for (const auto& cell : report["cells"]) rows.push_back(cell);
  } else {
    rows.push_back(json::object());
  }

  std::vector<std::pair<std::string, json>> shared_flat;
  detail::flatten_into(shared, "", shared_flat);

  // header = shared columns then per-cell columns (union, first-seen order)
  std::vector<std::string> columns;
  for (const auto& [key, _] : shared_flat) columns.push_back(key);
  std::vector<std::vector<std::pair<std::string, json>>> row_flats;
  for (const auto& row : rows) {
    row_flats.emplace_back();
    detail::flatten_into(row, "", row_flats.back());
    for (const auto& [key, _] : row_flats.back())
      if (std::find(columns.begin(), columns.end(), key) == columns.end()) columns.push_back(key);
  }

  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out += ',';
    out += columns[c];
  }
  out += '\n';
  for (const auto& flat : row_flats) {
    std::map<std::string, json> lookup(flat.begin(), flat.end());
    for (const auto& [key, value] : shared_flat) lookup.emplace(key, value);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ',';
      const auto it = lookup.find(columns[c]);
      if (it != lookup.end()) out += detail::csv_cell(it->second);
    }
    out += '\n';
  }
  return out;
}

}  // namespace bsattn
