// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/data.hpp"
#include "mixdet/eval.hpp"
#include "mixdet/net.hpp"
#include "mixdet/trainer.hpp"

namespace mixdet {

// ---------------------------------------------------------------------------
// A small TOML subset: [section] headers, key = value lines, # comments.
// Values: basic "strings", integers, floats, booleans, and single-line arrays
// of those. Exactly what the lab config needs — nested tables, multi-line
// arrays, and dates are rejected with a line-numbered error.
// ---------------------------------------------------------------------------

struct TomlValue {
  enum class Kind { kString, kInt, kFloat, kBool, kArray };
  Kind kind = Kind::kInt;
  std::string str;
  long long integer = 0;
  double number = 0.0;
  bool boolean = false;
  std::vector<TomlValue> array;
  int line = 0;

  /// Numeric accessor: integers widen to double.
  double as_number() const {
    if (kind == Kind::kInt) return static_cast<double>(integer);
    if (kind == Kind::kFloat) return number;
    throw std::runtime_error("not a number");
  }
};

namespace detail {

struct TomlCursor {
  const std::string& s;
  std::size_t pos = 0;
  int line;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("config: line " + std::to_string(line) + ": " + what);
  }
  bool done() const { return pos >= s.size(); }
  char peek() const { return done() ? '\0' : s[pos]; }
  void skip_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
};

inline bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline TomlValue parse_toml_value(TomlCursor& cur);

inline TomlValue parse_toml_string(TomlCursor& cur) {
  TomlValue v;
  v.kind = TomlValue::Kind::kString;
  v.line = cur.line;
  ++cur.pos;  // opening quote
  while (true) {
    if (cur.done()) cur.fail("unterminated string");
    const char c = cur.s[cur.pos++];
    if (c == '"') return v;
    if (c == '\\') {
      if (cur.done()) cur.fail("unterminated escape in string");
      const char e = cur.s[cur.pos++];
      switch (e) {
        case '"': v.str += '"'; break;
        case '\\': v.str += '\\'; break;
        case 'n': v.str += '\n'; break;
        case 't': v.str += '\t'; break;
        case 'r': v.str += '\r'; break;
        default: cur.fail(std::string("unsupported escape \\") + e);
      }
    } else {
      v.str += c;
    }
  }
}

inline TomlValue parse_toml_array(TomlCursor& cur) {
  TomlValue v;
  v.kind = TomlValue::Kind::kArray;
  v.line = cur.line;
  ++cur.pos;  // '['
  cur.skip_ws();
  if (cur.peek() == ']') {
    ++cur.pos;
    return v;
  }
  while (true) {
    v.array.push_back(parse_toml_value(cur));
    cur.skip_ws();
    if (cur.peek() == ',') {
      ++cur.pos;
      cur.skip_ws();
      if (cur.peek() == ']') {  // trailing comma
        ++cur.pos;
        return v;
      }
      continue;
    }
    if (cur.peek() == ']') {
      ++cur.pos;
      return v;
    }
    cur.fail("expected ',' or ']' in array");
  }
}

inline TomlValue parse_toml_scalar(TomlCursor& cur) {
  std::size_t end = cur.pos;
  while (end < cur.s.size() && cur.s[end] != ',' && cur.s[end] != ']' &&
         cur.s[end] != '#' && cur.s[end] != ' ' && cur.s[end] != '\t')
    ++end;
  const std::string tok = cur.s.substr(cur.pos, end - cur.pos);
  if (tok.empty()) cur.fail("expected a value");
  TomlValue v;
  v.line = cur.line;
  if (tok == "true" || tok == "false") {
    v.kind = TomlValue::Kind::kBool;
    v.boolean = tok == "true";
    cur.pos = end;
    return v;
  }
  const bool looks_float = tok.find_first_of(".eE") != std::string::npos &&
                           tok.find_first_of("0123456789") != std::string::npos;
  errno = 0;
  char* stop = nullptr;
  if (!looks_float) {
    const long long i = std::strtoll(tok.c_str(), &stop, 10);
    if (errno == 0 && stop == tok.c_str() + tok.size()) {
      v.kind = TomlValue::Kind::kInt;
      v.integer = i;
      cur.pos = end;
      return v;
    }
  }
  errno = 0;
  const double d = std::strtod(tok.c_str(), &stop);
  if (errno != 0 || stop != tok.c_str() + tok.size())
    cur.fail("cannot parse value \"" + tok + "\"");
  v.kind = TomlValue::Kind::kFloat;
  v.number = d;
  cur.pos = end;
  return v;
}

inline TomlValue parse_toml_value(TomlCursor& cur) {
  cur.skip_ws();
  const char c = cur.peek();
  if (c == '"') return parse_toml_string(cur);
  if (c == '[') return parse_toml_array(cur);
  return parse_toml_scalar(cur);
}

}  // namespace detail

/// @brief Parsed key/value view of a config file. Keys are addressed as
/// (section, key); the root section is "". Reads are tracked so a caller can
/// reject typo keys after consuming everything it understands.
class TomlTable {
 public:
  bool has(const std::string& section, const std::string& key) const {
    return entries_.count(section + "." + key) != 0;
  }

  const TomlValue* find(const std::string& section, const std::string& key) const {
    auto it = entries_.find(section + "." + key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second.value;
  }

  std::string get_string(const std::string& sec, const std::string& key,
                         std::string fallback) const {
    const TomlValue* v = find(sec, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kString) fail_kind(sec, key, *v, "a string");
    return v->str;
  }

  long long get_int(const std::string& sec, const std::string& key, long long fallback) const {
    const TomlValue* v = find(sec, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kInt) fail_kind(sec, key, *v, "an integer");
    return v->integer;
  }

  double get_double(const std::string& sec, const std::string& key, double fallback) const {
    const TomlValue* v = find(sec, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kInt && v->kind != TomlValue::Kind::kFloat)
      fail_kind(sec, key, *v, "a number");
    return v->as_number();
  }

  bool get_bool(const std::string& sec, const std::string& key, bool fallback) const {
    const TomlValue* v = find(sec, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kBool) fail_kind(sec, key, *v, "a boolean");
    return v->boolean;
  }

  std::vector<double> get_double_array(const std::string& sec, const std::string& key,
                                       std::vector<double> fallback) const {
    const TomlValue* v = find(sec, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kArray) fail_kind(sec, key, *v, "an array");
    std::vector<double> out;
    for (const TomlValue& e : v->array) {
      if (e.kind != TomlValue::Kind::kInt && e.kind != TomlValue::Kind::kFloat)
        fail_kind(sec, key, e, "an array of numbers");
      out.push_back(e.as_number());
    }
    return out;
  }

  std::vector<int> get_int_array(const std::string& sec, const std::string& key,
                                 std::vector<int> fallback) const {
    const TomlValue* v = find(sec, key);
    if (!v) return fallback;
    if (v->kind != TomlValue::Kind::kArray) fail_kind(sec, key, *v, "an array");
    std::vector<int> out;
    for (const TomlValue& e : v->array) {
      if (e.kind != TomlValue::Kind::kInt)
        fail_kind(sec, key, e, "an array of integers");
      out.push_back(static_cast<int>(e.integer));
    }
    return out;
  }

  /// Throws if any key was never read, naming every offender: typos must not
  /// silently fall back to defaults.
  void require_all_used() const {
    std::string bad;
    for (const auto& [name, entry] : entries_) {
      if (entry.used) continue;
      if (!bad.empty()) bad += ", ";
      bad += name.front() == '.' ? name.substr(1) : name;
    }
    if (!bad.empty()) throw std::runtime_error("config: unknown key(s): " + bad);
  }

  void insert(const std::string& section, const std::string& key, TomlValue value) {
    const std::string name = section + "." + key;
    if (entries_.count(name))
      throw std::runtime_error("config: line " + std::to_string(value.line) +
                               ": duplicate key \"" +
                               (name.front() == '.' ? name.substr(1) : name) + "\"");
    entries_.emplace(name, Entry{std::move(value), false});
  }

 private:
  struct Entry {
    TomlValue value;
    mutable bool used = false;
  };

  [[noreturn]] static void fail_kind(const std::string& sec, const std::string& key,
                                     const TomlValue& v, const std::string& want) {
    const std::string name = sec.empty() ? key : sec + "." + key;
    throw std::runtime_error("config: line " + std::to_string(v.line) + ": " + name +
                             " must be " + want);
  }

  std::map<std::string, Entry> entries_;
};

inline TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    detail::TomlCursor cur{raw, 0, line_no};
    cur.skip_ws();
    if (cur.done() || cur.peek() == '#') continue;
    if (cur.peek() == '[') {
      const std::size_t close = raw.find(']', cur.pos);
      if (close == std::string::npos) cur.fail("missing ']' in section header");
      section = raw.substr(cur.pos + 1, close - cur.pos - 1);
      if (section.empty()) cur.fail("empty section name");
      for (char c : section)
        if (!detail::is_bare_key_char(c) && c != '.')
          cur.fail("bad character in section name");
      cur.pos = close + 1;
      cur.skip_ws();
      if (!cur.done() && cur.peek() != '#') cur.fail("unexpected text after section header");
      continue;
    }
    std::string key;
    while (!cur.done() && detail::is_bare_key_char(cur.peek())) key += raw[cur.pos++];
    if (key.empty()) cur.fail("expected a key");
    cur.skip_ws();
    if (cur.peek() != '=') cur.fail("expected '=' after key \"" + key + "\"");
    ++cur.pos;
    TomlValue value = detail::parse_toml_value(cur);
    cur.skip_ws();
    if (!cur.done() && cur.peek() != '#') cur.fail("unexpected text after value");
    table.insert(section, key, std::move(value));
  }
  return table;
}

inline TomlTable parse_toml_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_toml(os.str());
}

// ---------------------------------------------------------------------------
// The lab config: dataset + architecture + training + evaluation, with the
// benchmark defaults baked into the field initializers.
// ---------------------------------------------------------------------------

/// @brief Synthetic dataset shape and where it lives on disk.
struct DatasetConfig {
  SyntheticSpec spec;
  std::size_t n_labeled = 200;
  std::size_t n_unlabeled = 2000;
  std::size_t n_eval = 500;
  std::string dir = "data/synth";
};

struct LabConfig {
  DatasetConfig data;
  ArchConfig arch;
  TrainConfig train;
  EvalParams eval;
  std::string out_dir = "runs/default";

  void validate() const {
    data.spec.validate();
    arch.validate();
    train.validate();
    eval.validate();
    if (arch.input_size != data.spec.image_size)
      throw std::invalid_argument("config: arch.input_size (" +
                                  std::to_string(arch.input_size) +
                                  ") must match data.image_size (" +
                                  std::to_string(data.spec.image_size) + ")");
    if (static_cast<std::size_t>(arch.num_classes) != data.spec.class_names.size())
      throw std::invalid_argument("config: arch.num_classes must match the dataset classes");
  }
};

namespace detail {

inline std::size_t get_size(const TomlTable& t, const std::string& sec, const std::string& key,
                            std::size_t fallback) {
  const long long v = t.get_int(sec, key, static_cast<long long>(fallback));
  if (v < 0)
    throw std::runtime_error("config: " + sec + "." + key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// @brief Overlay a parsed table onto the defaults. Unknown keys throw.
inline LabConfig lab_config_from_toml(const TomlTable& t) {
  LabConfig c;

  c.data.spec.image_size = static_cast<int>(t.get_int("data", "image_size", c.data.spec.image_size));
  c.data.spec.min_objects = static_cast<int>(t.get_int("data", "min_objects", c.data.spec.min_objects));
  c.data.spec.max_objects = static_cast<int>(t.get_int("data", "max_objects", c.data.spec.max_objects));
  c.data.spec.min_box = t.get_double("data", "min_box", c.data.spec.min_box);
  c.data.spec.max_box = t.get_double("data", "max_box", c.data.spec.max_box);
  c.data.spec.max_overlap_iou = t.get_double("data", "max_overlap_iou", c.data.spec.max_overlap_iou);
  c.data.spec.color_jitter = t.get_double("data", "color_jitter", c.data.spec.color_jitter);
  c.data.spec.seed = static_cast<std::uint64_t>(t.get_int("data", "seed", static_cast<long long>(c.data.spec.seed)));
  c.data.n_labeled = detail::get_size(t, "data", "n_labeled", c.data.n_labeled);
  c.data.n_unlabeled = detail::get_size(t, "data", "n_unlabeled", c.data.n_unlabeled);
  c.data.n_eval = detail::get_size(t, "data", "n_eval", c.data.n_eval);
  c.data.dir = t.get_string("data", "dir", c.data.dir);

  c.arch.input_size = static_cast<int>(t.get_int("arch", "input_size", c.data.spec.image_size));
  c.arch.channels = t.get_int_array("arch", "channels", c.arch.channels);
  c.arch.num_classes = static_cast<int>(t.get_int("arch", "num_classes", c.arch.num_classes));
  c.arch.aspect_ratios = t.get_double_array("arch", "aspect_ratios", c.arch.aspect_ratios);
  c.arch.anchor_scales = t.get_double_array("arch", "anchor_scales", c.arch.anchor_scales);

  c.train.mode = train_mode_from_string(t.get_string("train", "mode", to_string(c.train.mode)));
  c.train.types = isd_types_from_string(t.get_string("train", "types", to_string(c.train.types)));
  c.train.alpha = t.get_double("train", "alpha", c.train.alpha);
  c.train.gamma1 = t.get_double("train", "gamma1", c.train.gamma1);
  c.train.gamma2 = t.get_double("train", "gamma2", c.train.gamma2);
  c.train.batch_size = detail::get_size(t, "train", "batch_size", c.train.batch_size);
  c.train.labeled_fraction = t.get_double("train", "labeled_fraction", c.train.labeled_fraction);
  c.train.learning_rate = t.get_double("train", "learning_rate", c.train.learning_rate);
  c.train.momentum = t.get_double("train", "momentum", c.train.momentum);
  c.train.weight_decay = t.get_double("train", "weight_decay", c.train.weight_decay);
  c.train.max_iterations = detail::get_size(t, "train", "max_iterations", c.train.max_iterations);
  c.train.ramp_up = detail::get_size(t, "train", "ramp_up", c.train.ramp_up);
  c.train.ramp_down = detail::get_size(t, "train", "ramp_down", c.train.ramp_down);
  c.train.eval_every = detail::get_size(t, "train", "eval_every", c.train.eval_every);
  c.train.checkpoint_every = detail::get_size(t, "train", "checkpoint_every", c.train.checkpoint_every);
  c.train.seed = static_cast<std::uint64_t>(t.get_int("train", "seed", static_cast<long long>(c.train.seed)));
  c.train.isd_unlabeled_only = t.get_bool("train", "isd_unlabeled_only", c.train.isd_unlabeled_only);
  c.train.match_iou = t.get_double("train", "match_iou", c.train.match_iou);
  c.train.neg_pos_ratio = t.get_double("train", "neg_pos_ratio", c.train.neg_pos_ratio);

  c.eval.score_threshold = t.get_double("eval", "score_threshold", c.eval.score_threshold);
  c.eval.nms_iou = t.get_double("eval", "nms_iou", c.eval.nms_iou);
  c.eval.max_detections = static_cast<int>(t.get_int("eval", "max_detections", c.eval.max_detections));
  c.eval.match_iou = t.get_double("eval", "match_iou", c.eval.match_iou);
  c.eval.eleven_point = t.get_bool("eval", "eleven_point", c.eval.eleven_point);

  c.out_dir = t.get_string("run", "out_dir", c.out_dir);

  t.require_all_used();
  c.validate();
  return c;
}

inline LabConfig load_lab_config(const std::string& path) {
  return lab_config_from_toml(parse_toml_file(path));
}

}  // namespace mixdet
