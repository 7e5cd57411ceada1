#pragma once

#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uclab/common.hpp"
#include "uclab/io.hpp"

namespace uclab {

// Every run is driven by one config document, TOML or JSON. The TOML reader
// covers the flat dialect used by the stock configs: [section] headers and
// key = value lines where value is a string, bool, number, or a single-line
// array of those.

namespace toml {

inline std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline Json parse_scalar(const std::string& raw) {
  std::string v = strip(raw);
  require(!v.empty(), Errc::bad_config, "empty TOML value");
  if (v.front() == '"') {
    require(v.size() >= 2 && v.back() == '"', Errc::bad_config, "unterminated string: " + v);
    return Json(v.substr(1, v.size() - 2));
  }
  if (v == "true") return Json(true);
  if (v == "false") return Json(false);
  try {
    std::size_t used = 0;
    if (v.find_first_of(".eE") == std::string::npos &&
        v.find("inf") == std::string::npos && v.find("nan") == std::string::npos) {
      long long i = std::stoll(v, &used);
      if (used == v.size()) return Json(i);
    }
    double d = std::stod(v, &used);
    require(used == v.size(), Errc::bad_config, "trailing characters in number: " + v);
    return Json(d);
  } catch (const std::exception&) {
    fail(Errc::bad_config, "cannot parse TOML value: " + v);
  }
}

inline Json parse_value(const std::string& raw) {
  std::string v = strip(raw);
  if (!v.empty() && v.front() == '[') {
    require(v.back() == ']', Errc::bad_config, "unterminated array: " + v);
    Json arr = Json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::string item;
    int depth = 0;
    bool in_str = false;
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (!in_str && c == '[') ++depth;
      if (!in_str && c == ']') --depth;
      if (!in_str && depth == 0 && c == ',') {
        if (!strip(item).empty()) arr.push_back(parse_scalar(item));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!strip(item).empty()) arr.push_back(parse_scalar(item));
    return arr;
  }
  return parse_scalar(v);
}

inline Json parse(const std::string& text) {
  Json doc = Json::object();
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // comments start at an unquoted '#'
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line = line.substr(0, i);
        break;
      }
    }
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', Errc::bad_config,
              "bad section header on line " + std::to_string(lineno));
      section = strip(line.substr(1, line.size() - 2));
      require(!section.empty(), Errc::bad_config, "empty section name");
      if (!doc.contains(section)) doc[section] = Json::object();
      continue;
    }
    std::size_t eq = std::string::npos;
    in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '=' && !in_str) {
        eq = i;
        break;
      }
    }
    require(eq != std::string::npos, Errc::bad_config,
            "expected key = value on line " + std::to_string(lineno));
    std::string key = strip(line.substr(0, eq));
    require(!key.empty(), Errc::bad_config, "empty key on line " + std::to_string(lineno));
    require(!section.empty(), Errc::bad_config,
            "key outside any [section] on line " + std::to_string(lineno));
    doc[section][key] = parse_value(line.substr(eq + 1));
  }
  return doc;
}

}  // namespace toml

// Full schema with defaults; config files and --set overrides may only touch
// keys that exist here.
inline Json default_config() {
  Json c;
  c["run"] = {{"dimension", 1}, {"seed", 42}};
  c["grid"] = {{"L", 8.0}, {"n", 1023}};
  c["potential"] = {{"family", "constant"}, {"value", 0.0},    {"v0", 0.0},
                    {"edge", 0.0},          {"period", 1.0},   {"bump_radius", 0.5},
                    {"seed", 1}};
  c["sequence"] = {{"kind", "periodic"}, {"M", 1.0}, {"seed", 7}};
  c["sampling"] = {{"delta", Json::array({0.25})}};
  c["bound"] = {{"K", "fit"},
                {"fit_margin", 0.1},
                {"holdout_seeds", Json::array({101, 102, 103, 104, 105})}};
  c["solver"] = {{"n_eigs", 1},
                 {"tol", 1e-8},
                 {"dense_threshold", 4096},
                 {"force_iterative", false},
                 {"max_subspace", 0}};
  c["interval"] = {{"center", "ground"}, {"halfwidth", "auto"}, {"E0", 1.0}};
  c["weyl"] = {{"E", 1.0},
               {"n_from", 2},
               {"n_to", 50},
               {"strategy", "gaussian-packet"},
               {"center", Json::array()},
               {"sigma0", 2.0},
               {"sigma_growth", 1.25},
               {"boundary_sigmas", 6.5},
               {"defect_fraction", 0.0},
               {"defect_eigs", 8}};
  c["residual"] = {{"eigenfunctions", 2},
                   {"packets_x0", Json::array()},
                   {"packets_sigma", Json::array()},
                   {"packets_xi", Json::array()},
                   {"band_limited", 3},
                   {"band_modes", 8},
                   {"band_seed", 11}};
  c["geometry"] = {{"trials", 1000}, {"dims", Json::array({1, 2, 3})}, {"export_mask", false}};
  c["report"] = {{"ratio_slack", 1e-12},
                 {"boundary_flag", 1e-6},
                 {"mu_tolerance", 1e-10},
                 {"chain_tolerance", 1e-8},
                 {"oracle_tolerance", 1e-8}};
  return c;
}

inline void merge_into_schema(Json& base, const Json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    require(base.contains(it.key()), Errc::bad_config, "unknown config section: " + it.key());
    require(it.value().is_object(), Errc::bad_config,
            "section " + it.key() + " must be a table");
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv) {
      require(base[it.key()].contains(kv.key()), Errc::bad_config,
              "unknown config key: " + it.key() + "." + kv.key());
      base[it.key()][kv.key()] = kv.value();
    }
  }
}

inline Json load_config_text(const std::string& text) {
  Json cfg = default_config();
  std::size_t first = text.find_first_not_of(" \t\r\n");
  Json doc;
  if (first != std::string::npos && (text[first] == '{')) {
    doc = Json::parse(text);
  } else {
    doc = toml::parse(text);
  }
  merge_into_schema(cfg, doc);
  return cfg;
}

inline Json load_config_file(const std::filesystem::path& path) {
  return load_config_text(read_file(path));
}

// --set section.key=value; the value is parsed with the TOML value grammar.
inline void apply_override(Json& cfg, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  require(eq != std::string::npos, Errc::bad_config, "override must be key=value");
  std::string key = toml::strip(assignment.substr(0, eq));
  std::size_t dot = key.find('.');
  require(dot != std::string::npos, Errc::bad_config,
          "override key must be section.key: " + key);
  std::string sec = key.substr(0, dot);
  std::string name = key.substr(dot + 1);
  require(cfg.contains(sec) && cfg[sec].contains(name), Errc::bad_config,
          "override references unknown key: " + key);
  cfg[sec][name] = toml::parse_value(assignment.substr(eq + 1));
}

}  // namespace uclab
