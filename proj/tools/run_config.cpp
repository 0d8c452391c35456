#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#ifndef MGRACT_DATA_DIR
#define MGRACT_DATA_DIR "data"
#endif

namespace mgract::cli {

using nlohmann::json;

RunConfig::RunConfig()
    : bins_path(std::string(MGRACT_DATA_DIR) + "/bins.json"),
      rules_path(std::string(MGRACT_DATA_DIR) + "/rules.json"),
      threads(default_threads()) {}

void RunConfig::validate() const {
  try {
    hse.validate();
    mgr.validate();
    train.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (!(parse.confidence_threshold >= 0.0 && parse.confidence_threshold <= 1.0)) {
    throw UsageError("confidence threshold must lie in [0,1]");
  }
  if (resample && *resample < 2) throw UsageError("resample target must be at least 2 frames");
  if (cm_per_unit && !(*cm_per_unit > 0.0)) throw UsageError("cm-per-unit must be positive");
  if (synth.per_class < 1) throw UsageError("per-class must be at least 1");
  if (!(synth.noise_sigma >= 0.0)) throw UsageError("noise must be non-negative");
  if (!(synth.duration_s > 0.0) || !(synth.fps > 0.0)) throw UsageError("duration and fps must be positive");
  if (!(min_support > 0.0 && min_support <= 1.0)) throw UsageError("min-support must lie in (0,1]");
  if (!(min_confidence > 0.0 && min_confidence <= 1.0)) throw UsageError("min-confidence must lie in (0,1]");
  if (threads < 1) throw UsageError("threads must be positive");
}

json to_json(const RunConfig& c) {
  json j;
  j["parse"] = {{"confidence_threshold", c.parse.confidence_threshold}};
  j["tokenize"] = {{"alpha", c.hse.alpha},
                   {"unwrap_angles", c.hse.unwrap_angles},
                   {"k", c.mgr.k},
                   {"select_k", c.mgr.k_range ? json(format_k_range(*c.mgr.k_range)) : json(nullptr)},
                   {"max_iter", c.mgr.max_iter},
                   {"tol", c.mgr.tol},
                   {"eps_floor_rel", c.mgr.eps_floor_rel},
                   {"eps_floor", c.mgr.eps_floor ? json(*c.mgr.eps_floor) : json(nullptr)},
                   {"resample", c.resample ? json(*c.resample) : json(nullptr)}};
  j["train"] = json::parse(train_config_json(c.train));
  j["synth"] = {{"per_class", c.synth.per_class},
                {"noise", c.synth.noise_sigma},
                {"seed", c.synth.seed},
                {"duration_s", c.synth.duration_s},
                {"fps", c.synth.fps},
                {"classes", c.synth_classes ? json(*c.synth_classes) : json(nullptr)}};
  j["report"] = {{"cm_per_unit", c.cm_per_unit ? json(*c.cm_per_unit) : json(nullptr)},
                 {"bins", c.bins_path},
                 {"rules", c.rules_path}};
  j["mine"] = {{"min_support", c.min_support}, {"min_confidence", c.min_confidence}};
  return j;
}

namespace {

template <typename T>
void take(const json& obj, const char* key, T& dst) {
  if (obj.contains(key) && !obj.at(key).is_null()) dst = obj.at(key).get<T>();
}

template <typename T>
void take_optional(const json& obj, const char* key, std::optional<T>& dst) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) dst.reset();
  else dst = obj.at(key).get<T>();
}

}  // namespace

void apply_json(RunConfig& c, const json& j) {
  try {
    if (!j.is_object()) throw UsageError("config root must be an object");
    if (j.contains("parse")) take(j.at("parse"), "confidence_threshold", c.parse.confidence_threshold);
    if (j.contains("tokenize")) {
      const json& t = j.at("tokenize");
      take(t, "alpha", c.hse.alpha);
      take(t, "unwrap_angles", c.hse.unwrap_angles);
      take(t, "k", c.mgr.k);
      if (t.contains("select_k")) {
        if (t.at("select_k").is_null()) c.mgr.k_range.reset();
        else c.mgr.k_range = parse_k_range(t.at("select_k").get<std::string>());
      }
      take(t, "max_iter", c.mgr.max_iter);
      take(t, "tol", c.mgr.tol);
      take(t, "eps_floor_rel", c.mgr.eps_floor_rel);
      take_optional(t, "eps_floor", c.mgr.eps_floor);
      take_optional(t, "resample", c.resample);
    }
    if (j.contains("train")) {
      json merged = json::parse(train_config_json(c.train));
      merged.update(j.at("train"));
      c.train = train_config_from_json(merged.dump());
    }
    if (j.contains("synth")) {
      const json& s = j.at("synth");
      take(s, "per_class", c.synth.per_class);
      take(s, "noise", c.synth.noise_sigma);
      take(s, "seed", c.synth.seed);
      take(s, "duration_s", c.synth.duration_s);
      take(s, "fps", c.synth.fps);
      take_optional(s, "classes", c.synth_classes);
    }
    if (j.contains("report")) {
      const json& r = j.at("report");
      take_optional(r, "cm_per_unit", c.cm_per_unit);
      take(r, "bins", c.bins_path);
      take(r, "rules", c.rules_path);
    }
    if (j.contains("mine")) {
      take(j.at("mine"), "min_support", c.min_support);
      take(j.at("mine"), "min_confidence", c.min_confidence);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  } catch (const ModelError& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
}

namespace {

std::string strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing comment that is not inside a string.
std::string drop_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

json toml_scalar(const std::string& raw, int line_no) {
  auto fail = [&]() -> json {
    throw UsageError("config line " + std::to_string(line_no) + ": cannot parse value '" + raw + "'");
  };
  if (raw.empty()) return fail();
  if (raw.front() == '"' || raw.front() == '\'') {
    if (raw.size() < 2 || raw.back() != raw.front()) return fail();
    std::string body = raw.substr(1, raw.size() - 2);
    if (raw.front() == '\'') return body;
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '\\' && i + 1 < body.size()) {
        const char n = body[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += body[i];
      }
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  std::string num;
  for (char c : raw) {
    if (c != '_') num += c;
  }
  const bool is_float = num.find_first_of(".eE") != std::string::npos || num == "inf" || num == "nan";
  if (!is_float) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec == std::errc() && p == num.data() + num.size()) return v;
    return fail();
  }
  char* end = nullptr;
  const double v = std::strtod(num.c_str(), &end);
  if (end != num.c_str() + num.size()) return fail();
  return v;
}

json toml_value(const std::string& raw, int line_no) {
  if (raw.empty() || raw.front() != '[') return toml_scalar(raw, line_no);
  if (raw.back() != ']') throw UsageError("config line " + std::to_string(line_no) + ": unterminated array");
  json arr = json::array();
  const std::string body = raw.substr(1, raw.size() - 2);
  std::string item;
  char quote = 0;
  for (char c : body + ",") {
    if (quote) {
      item += c;
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
      item += c;
    } else if (c == ',') {
      const std::string s = strip(item);
      if (!s.empty()) arr.push_back(toml_scalar(s, line_no));
      item.clear();
    } else {
      item += c;
    }
  }
  return arr;
}

}  // namespace

json parse_toml_subset(std::string_view text) {
  json root = json::object();
  json* section = &root;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = strip(drop_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw UsageError("config line " + std::to_string(line_no) + ": bad section");
      section = &root;
      std::istringstream parts(s.substr(1, s.size() - 2));
      std::string part;
      while (std::getline(parts, part, '.')) {
        part = strip(part);
        if (part.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty section name");
        json& next = (*section)[part];
        if (next.is_null()) next = json::object();
        section = &next;
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = strip(s.substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    (*section)[key] = toml_value(strip(s.substr(eq + 1)), line_no);
  }
  return root;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw UsageError("malformed JSON config: " + std::string(e.what()));
    }
  }
  return parse_toml_subset(text);
}

KRange parse_k_range(std::string_view text) {
  auto to_int = [&](std::string_view s) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("bad k range '" + std::string(text) + "'");
    return v;
  };
  KRange r;
  const auto dots = text.find("..");
  if (dots == std::string_view::npos) {
    r.lo = r.hi = to_int(text);
  } else {
    r.lo = to_int(text.substr(0, dots));
    r.hi = to_int(text.substr(dots + 2));
  }
  if (r.lo < 1 || r.hi < r.lo) throw UsageError("bad k range '" + std::string(text) + "'");
  return r;
}

std::string format_k_range(const KRange& r) { return std::to_string(r.lo) + ".." + std::to_string(r.hi); }

int default_threads() {
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MGR_ACT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return std::min(v, hw);
  }
  return hw;
}

std::string provenance_json(const RunConfig& cfg, const std::string& command) {
  json j;
  j["tool"] = "mgr-act";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config"] = to_json(cfg);
  return j.dump();
}

}  // namespace mgract::cli
