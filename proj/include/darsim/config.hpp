#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "darsim/engine.hpp"
#include "darsim/errors.hpp"

namespace darsim {

// Scalar or flat array value from the configuration document.
struct ConfigValue {
  enum class Type { kString, kInt, kFloat, kBool, kArray };
  Type type = Type::kInt;
  std::string str;
  std::int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::vector<ConfigValue> arr;
  int line = 0;

  double as_number() const {
    if (type == Type::kInt) return static_cast<double>(i);
    if (type == Type::kFloat) return f;
    throw ValidationError("expected a number at line " + std::to_string(line));
  }

  std::int64_t as_int() const {
    if (type != Type::kInt)
      throw ValidationError("expected an integer at line " +
                            std::to_string(line));
    return i;
  }

  const std::string& as_string() const {
    if (type != Type::kString)
      throw ValidationError("expected a string at line " +
                            std::to_string(line));
    return str;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline ConfigValue parse_scalar(std::string_view tok, int line) {
  ConfigValue v;
  v.line = line;
  tok = trim(tok);
  if (tok.empty()) throw ParseError("line " + std::to_string(line) +
                                    ": empty value");
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"')
      throw ParseError("line " + std::to_string(line) +
                       ": unterminated string");
    v.type = ConfigValue::Type::kString;
    v.str = std::string(tok.substr(1, tok.size() - 2));
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.type = ConfigValue::Type::kBool;
    v.b = tok == "true";
    return v;
  }
  // Integer: optional sign followed by digits only.
  bool integral = true;
  for (std::size_t k = 0; k < tok.size(); ++k) {
    const char c = tok[k];
    if (k == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      integral = false;
      break;
    }
  }
  const std::string s(tok);
  std::size_t used = 0;
  try {
    if (integral) {
      v.type = ConfigValue::Type::kInt;
      v.i = std::stoll(s, &used);
    } else {
      v.type = ConfigValue::Type::kFloat;
      v.f = std::stod(s, &used);
    }
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": bad value '" + s +
                     "'");
  }
  if (used != s.size())
    throw ParseError("line " + std::to_string(line) + ": bad value '" + s +
                     "'");
  return v;
}

inline ConfigValue parse_value(std::string_view tok, int line) {
  tok = trim(tok);
  if (!tok.empty() && tok.front() == '[') {
    if (tok.back() != ']')
      throw ParseError("line " + std::to_string(line) +
                       ": unterminated array");
    ConfigValue v;
    v.type = ConfigValue::Type::kArray;
    v.line = line;
    std::string_view body = tok.substr(1, tok.size() - 2);
    std::size_t start = 0;
    bool in_string = false;
    for (std::size_t k = 0; k <= body.size(); ++k) {
      if (k < body.size() && body[k] == '"') in_string = !in_string;
      if (k == body.size() || (body[k] == ',' && !in_string)) {
        const std::string_view item = trim(body.substr(start, k - start));
        if (!item.empty()) v.arr.push_back(parse_scalar(item, line));
        start = k + 1;
      }
    }
    if (v.arr.empty())
      throw ParseError("line " + std::to_string(line) + ": empty array");
    return v;
  }
  return parse_scalar(tok, line);
}

}  // namespace detail

// Parse a flat `key = value` document (TOML syntax subset: strings,
// integers, floats, booleans, single-line arrays, # comments).
inline std::map<std::string, ConfigValue> parse_toml_subset(
    std::string_view text) {
  std::map<std::string, ConfigValue> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    // Strip comments outside strings.
    bool in_string = false;
    std::size_t cut = line.size();
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') in_string = !in_string;
      if (line[k] == '#' && !in_string) {
        cut = k;
        break;
      }
    }
    line = detail::trim(line.substr(0, cut));
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty())
      throw ParseError("line " + std::to_string(line_no) + ": empty key");
    for (char c : key) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
        throw ParseError("line " + std::to_string(line_no) + ": bad key '" +
                         key + "'");
    }
    if (out.contains(key))
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" +
                       key + "'");
    out.emplace(key, detail::parse_value(line.substr(eq + 1), line_no));
  }
  return out;
}

enum class OutputFormat { kCsv, kJson };

inline const char* format_name(OutputFormat f) {
  return f == OutputFormat::kCsv ? "csv" : "json";
}

inline OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::kCsv;
  if (s == "json") return OutputFormat::kJson;
  throw ValidationError("format must be csv or json, got '" + s + "'");
}

struct SweepAxis {
  std::string name;  // capacity | d | lambda | n | policy
  std::vector<ConfigValue> values;
};

// Full experiment description: a base run plus optional sweep axis,
// replication count and output settings.
struct ExperimentSpec {
  SimConfig base;
  std::optional<SweepAxis> sweep;
  int replications = 1;
  std::string output_dir = "out";
  OutputFormat format = OutputFormat::kJson;
};

inline Capacity parse_capacity_value(const ConfigValue& v) {
  if (v.type == ConfigValue::Type::kString) {
    if (v.as_string() == "infinite") return Capacity::infinite();
    throw ValidationError("capacity must be a positive integer or \"infinite\"");
  }
  const std::int64_t c = v.as_int();
  if (c < 1) throw ValidationError("capacity must be >= 1");
  return Capacity::finite(static_cast<int>(c));
}

// Apply one sweep-axis value to a copy of the base configuration.
inline SimConfig with_axis_value(const SimConfig& base, const std::string& axis,
                                 const ConfigValue& v) {
  SimConfig cfg = base;
  if (axis == "capacity") {
    cfg.capacity = parse_capacity_value(v);
  } else if (axis == "d") {
    cfg.d = static_cast<int>(v.as_int());
    if (cfg.d < 1) throw ValidationError("d must be >= 1");
  } else if (axis == "lambda") {
    cfg.lambda = v.as_number();
    if (!(cfg.lambda > 0)) throw ValidationError("lambda must be > 0");
  } else if (axis == "n") {
    cfg.n = static_cast<int>(v.as_int());
    if (cfg.n < 4) throw ValidationError("n must be >= 4");
  } else if (axis == "policy") {
    cfg.policy = parse_policy(v.as_string());
  } else {
    throw ValidationError("unknown sweep axis '" + axis + "'");
  }
  return cfg;
}

inline std::string axis_value_label(const ConfigValue& v) {
  switch (v.type) {
    case ConfigValue::Type::kString:
      return v.str;
    case ConfigValue::Type::kInt:
      return std::to_string(v.i);
    case ConfigValue::Type::kFloat: {
      std::string s = std::to_string(v.f);
      while (s.size() > 1 && s.back() == '0') s.pop_back();
      if (!s.empty() && s.back() == '.') s.pop_back();
      return s;
    }
    case ConfigValue::Type::kBool:
      return v.b ? "true" : "false";
    case ConfigValue::Type::kArray:
      break;
  }
  throw ValidationError("sweep values must be scalars");
}

// Parse and validate a configuration document, filling documented defaults
// (warmup = 10 ln n, snapshot_every = 0). Unknown keys are rejected.
inline ExperimentSpec parse_config(std::string_view text) {
  auto kv = parse_toml_subset(text);
  ExperimentSpec spec;

  auto take = [&](const char* key) -> std::optional<ConfigValue> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    ConfigValue v = it->second;
    kv.erase(it);
    return v;
  };
  auto require = [&](const char* key) -> ConfigValue {
    auto v = take(key);
    if (!v) throw ValidationError(std::string("missing required key '") + key +
                                  "'");
    return *v;
  };

  spec.base.n = static_cast<int>(require("n").as_int());
  if (spec.base.n < 4) throw ValidationError("n must be >= 4");
  spec.base.lambda = require("lambda").as_number();
  if (!(spec.base.lambda > 0)) throw ValidationError("lambda must be > 0");
  spec.base.d = static_cast<int>(require("d").as_int());
  if (spec.base.d < 1) throw ValidationError("d must be >= 1");
  spec.base.capacity = parse_capacity_value(require("capacity"));
  spec.base.policy = parse_policy(require("policy").as_string());
  spec.base.horizon = require("horizon").as_number();
  if (!(spec.base.horizon > 0)) throw ValidationError("horizon must be > 0");
  spec.base.seed = static_cast<std::uint64_t>(require("seed").as_int());

  if (auto v = take("warmup"))
    spec.base.warmup = v->as_number();
  else
    spec.base.warmup = 10.0 * std::log(static_cast<double>(spec.base.n));
  if (spec.base.warmup < 0) throw ValidationError("warmup must be >= 0");
  if (spec.base.warmup >= spec.base.horizon)
    throw ValidationError("warmup must be < horizon");

  if (auto v = take("snapshot_every")) {
    spec.base.snapshot_every = v->as_number();
    if (spec.base.snapshot_every < 0)
      throw ValidationError("snapshot_every must be >= 0");
  }
  if (auto v = take("mode")) spec.base.mode = parse_mode(v->as_string());
  if (auto v = take("max_events")) {
    if (v->as_int() < 0) throw ValidationError("max_events must be >= 0");
    spec.base.max_events = static_cast<std::uint64_t>(v->as_int());
  }

  if (auto v = take("replications")) {
    spec.replications = static_cast<int>(v->as_int());
    if (spec.replications < 1)
      throw ValidationError("replications must be >= 1");
  }
  if (auto v = take("output_dir")) spec.output_dir = v->as_string();
  if (auto v = take("format")) spec.format = parse_format(v->as_string());

  const auto axis = take("sweep_axis");
  const auto values = take("sweep_values");
  if (axis.has_value() != values.has_value())
    throw ValidationError(
        "sweep_axis and sweep_values must be given together");
  if (axis) {
    SweepAxis sweep;
    sweep.name = axis->as_string();
    if (values->type != ConfigValue::Type::kArray)
      throw ValidationError("sweep_values must be an array");
    sweep.values = values->arr;
    // Type-check every value against the axis now.
    for (const ConfigValue& v : sweep.values)
      (void)with_axis_value(spec.base, sweep.name, v);
    spec.sweep = std::move(sweep);
  }

  if (!kv.empty())
    throw ValidationError("unknown key '" + kv.begin()->first + "' at line " +
                          std::to_string(kv.begin()->second.line));
  return spec;
}

}  // namespace darsim
