#include "mgract/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mgract {

using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double round_to(double v, int decimals) {
  const double p = std::pow(10.0, decimals);
  return std::round(v * p) / p;
}

}  // namespace

bool Bin::contains(double v) const {
  if (lo && (lo_inclusive ? v < *lo : v <= *lo)) return false;
  if (hi && (hi_inclusive ? v > *hi : v >= *hi)) return false;
  return true;
}

void MetricBins::validate() const {
  if (bins.empty()) throw ReportError("metric '" + metric + "' has no bins");
  if (bins.front().lo) throw ReportError("metric '" + metric + "': first bin must be unbounded below");
  if (bins.back().hi) throw ReportError("metric '" + metric + "': last bin must be unbounded above");
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const Bin& b = bins[i];
    if (b.label.empty()) throw ReportError("metric '" + metric + "': bin without label");
    if (b.lo && b.hi && (*b.lo > *b.hi || (*b.lo == *b.hi && !(b.lo_inclusive && b.hi_inclusive)))) {
      throw ReportError("metric '" + metric + "': empty bin '" + b.label + "'");
    }
    if (i + 1 < bins.size()) {
      const Bin& n = bins[i + 1];
      if (!b.hi || !n.lo || *b.hi != *n.lo) {
        throw ReportError("metric '" + metric + "': bins '" + b.label + "' and '" + n.label + "' are not adjacent");
      }
      if (b.hi_inclusive == n.lo_inclusive) {
        throw ReportError("metric '" + metric + "': boundary " + format_value(*b.hi, 6) + " must belong to exactly one bin");
      }
    }
  }
}

const MetricBins& BinTable::at(std::string_view metric) const {
  for (const MetricBins& m : metrics) {
    if (m.metric == metric) return m;
  }
  throw ReportError("bin table has no metric '" + std::string(metric) + "'");
}

BinTable parse_bin_table(std::string_view json_text) {
  BinTable table;
  try {
    const json doc = json::parse(json_text);
    table.version = doc.at("version").get<int>();
    if (table.version != 1) throw ReportError("unsupported bin table version");
    for (const json& mj : doc.at("metrics")) {
      MetricBins m;
      m.metric = mj.at("metric").get<std::string>();
      m.unit = mj.value("unit", "");
      m.noun = mj.value("noun", "");
      m.display_scale = mj.value("display_scale", 1.0);
      m.decimals = mj.value("decimals", 1);
      for (const json& bj : mj.at("bins")) {
        Bin b;
        b.label = bj.at("label").get<std::string>();
        if (bj.contains("lo") && !bj.at("lo").is_null()) b.lo = bj.at("lo").get<double>();
        if (bj.contains("hi") && !bj.at("hi").is_null()) b.hi = bj.at("hi").get<double>();
        b.lo_inclusive = bj.value("lo_inclusive", true);
        b.hi_inclusive = bj.value("hi_inclusive", true);
        m.bins.push_back(std::move(b));
      }
      m.validate();
      table.metrics.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed bin table: ") + e.what());
  }
  return table;
}

BinTable load_bin_table(const std::string& path) { return parse_bin_table(read_text(path)); }

std::string format_value(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", std::max(0, decimals), v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

Descriptor quantize_value(const MetricBins& bins, double value) {
  Descriptor d;
  d.metric = bins.metric;
  d.value = round_to(value * bins.display_scale, bins.decimals);
  for (const Bin& b : bins.bins) {
    if (b.contains(d.value)) {
      d.label = b.label;
      break;
    }
  }
  if (d.label.empty()) throw ReportError("value " + format_value(d.value, 6) + " outside every bin of " + bins.metric);
  d.text = d.label + " " + format_value(d.value, bins.decimals) + bins.unit;
  if (!bins.noun.empty()) d.text += " " + bins.noun;
  return d;
}

std::vector<Descriptor> quantize(const KinematicMetrics& m, const BinTable& bins) {
  std::vector<Descriptor> out;
  if (m.depth_cm) out.push_back(quantize_value(bins.at("depth"), *m.depth_cm));
  else out.push_back(quantize_value(bins.at("depth_units"), m.depth_units));
  if (m.too_short) {
    out.push_back({"rate", "unknown", 0.0, "unknown rate (clip shorter than one stroke)"});
  } else {
    out.push_back(quantize_value(bins.at("rate"), m.compression_rate));
  }
  out.push_back(quantize_value(bins.at("elbow"), m.elbow_angle_mean));
  out.push_back(quantize_value(bins.at("tilt"), m.torso_tilt));
  out.push_back(quantize_value(bins.at("recoil"), m.recoil_completeness));
  out.push_back(quantize_value(bins.at("drift"), m.hand_drift));
  return out;
}

std::map<std::string, double> RuleTable::weights() const {
  std::map<std::string, double> w;
  for (const Rule& r : rules) w[r.id] = penalties.at(r.category);
  return w;
}

RuleTable parse_rule_table(std::string_view json_text) {
  RuleTable table;
  try {
    const json doc = json::parse(json_text);
    table.version = doc.at("version").get<int>();
    if (table.version != 1) throw ReportError("unsupported rule table version");
    table.penalties = doc.at("penalties").get<std::map<std::string, double>>();
    std::set<std::string> ids;
    for (const json& rj : doc.at("rules")) {
      Rule r;
      r.id = rj.at("id").get<std::string>();
      if (!ids.insert(r.id).second) throw ReportError("duplicate rule id '" + r.id + "'");
      r.category = rj.at("category").get<std::string>();
      if (!table.penalties.count(r.category)) {
        throw ReportError("rule '" + r.id + "' has category '" + r.category + "' without a penalty");
      }
      r.severity = rj.value("severity", 1);
      for (const json& cj : rj.at("when")) {
        r.when.push_back({cj.at("metric").get<std::string>(), cj.at("label").get<std::string>()});
      }
      if (r.when.empty()) throw ReportError("rule '" + r.id + "' has no conditions");
      r.manifestation = rj.at("manifestation").get<std::string>();
      r.consequence = rj.at("consequence").get<std::string>();
      table.rules.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed rule table: ") + e.what());
  }
  for (const auto& [cat, p] : table.penalties) {
    if (!(p >= 0.0)) throw ReportError("penalty for '" + cat + "' must be non-negative");
  }
  return table;
}

RuleTable load_rule_table(const std::string& path) { return parse_rule_table(read_text(path)); }

std::vector<Finding> reason_chain(const std::vector<Descriptor>& descriptors, const RuleTable& rules) {
  std::vector<Finding> out;
  for (const Rule& r : rules.rules) {
    Finding f;
    bool fires = true;
    for (const Condition& c : r.when) {
      const auto it = std::find_if(descriptors.begin(), descriptors.end(),
                                   [&](const Descriptor& d) { return d.metric == c.metric && d.label == c.label; });
      if (it == descriptors.end()) {
        fires = false;
        break;
      }
      f.evidence.push_back(it->text);
    }
    if (!fires) continue;
    f.rule_id = r.id;
    f.manifestation = r.manifestation;
    f.consequence = r.consequence;
    f.severity = r.severity;
    out.push_back(std::move(f));
  }
  std::stable_sort(out.begin(), out.end(), [](const Finding& a, const Finding& b) { return a.severity < b.severity; });
  return out;
}

int effectiveness_score(const std::vector<Finding>& findings, const std::map<std::string, double>& weights) {
  double penalty = 0.0;
  for (const Finding& f : findings) {
    const auto it = weights.find(f.rule_id);
    if (it == weights.end()) throw ReportError("unknown rule id '" + f.rule_id + "'");
    penalty += it->second;
  }
  return static_cast<int>(std::clamp(std::lround(100.0 - penalty), 0L, 100L));
}

EvaluationReport build_report(const KinematicMetrics& metrics, const BinTable& bins, const RuleTable& rules,
                              std::optional<LabelPrediction> prediction) {
  EvaluationReport r;
  r.metrics = metrics;
  r.descriptors = quantize(metrics, bins);
  r.findings = reason_chain(r.descriptors, rules);
  r.effectiveness = effectiveness_score(r.findings, rules.weights());
  r.prediction = std::move(prediction);
  return r;
}

std::string report_json(const EvaluationReport& r, const std::string& provenance_json) {
  json doc;
  doc["version"] = 1;
  const KinematicMetrics& m = r.metrics;
  doc["metrics"] = {{"compression_rate", m.compression_rate},
                    {"too_short", m.too_short},
                    {"depth_units", m.depth_units},
                    {"depth_cm", m.depth_cm ? json(*m.depth_cm) : json(nullptr)},
                    {"elbow_angle_mean", m.elbow_angle_mean},
                    {"torso_tilt", m.torso_tilt},
                    {"recoil_completeness", m.recoil_completeness},
                    {"hand_drift", m.hand_drift}};
  json desc = json::array();
  for (const Descriptor& d : r.descriptors) {
    desc.push_back({{"metric", d.metric}, {"label", d.label}, {"value", d.value}, {"text", d.text}});
  }
  doc["descriptors"] = desc;
  json findings = json::array();
  for (const Finding& f : r.findings) {
    findings.push_back({{"rule", f.rule_id},
                        {"evidence", f.evidence},
                        {"manifestation", f.manifestation},
                        {"consequence", f.consequence},
                        {"severity", f.severity}});
  }
  doc["findings"] = findings;
  doc["effectiveness"] = r.effectiveness;
  if (r.prediction) {
    json probs = json::object();
    for (const auto& [label, p] : r.prediction->probabilities) probs[label] = p;
    json secondary = json::array();
    for (const auto& [label, p] : r.prediction->secondary) secondary.push_back({{"label", label}, {"probability", p}});
    doc["prediction"] = {{"primary", r.prediction->primary}, {"secondary", secondary}, {"probabilities", probs}};
  } else {
    doc["prediction"] = nullptr;
  }
  if (!provenance_json.empty()) doc["provenance"] = json::parse(provenance_json);
  return doc.dump(2);
}

std::string report_text(const EvaluationReport& r) {
  std::ostringstream os;
  os << "Effectiveness: " << r.effectiveness << "/100\n";
  if (r.prediction) {
    os << "Predicted: " << r.prediction->primary;
    if (!r.prediction->secondary.empty()) {
      os << " (also:";
      for (const auto& [label, p] : r.prediction->secondary) os << ' ' << label << ' ' << format_value(p, 2);
      os << ')';
    }
    os << '\n';
  }
  os << "Metrics:\n";
  for (const Descriptor& d : r.descriptors) os << "  - " << d.text << '\n';
  if (r.findings.empty()) {
    os << "Findings: none\n";
  } else {
    os << "Findings:\n";
    for (const Finding& f : r.findings) {
      os << "  [" << f.rule_id << "] ";
      for (std::size_t i = 0; i < f.evidence.size(); ++i) os << (i ? " + " : "") << f.evidence[i];
      os << " -> " << f.manifestation << " -> " << f.consequence << '\n';
    }
  }
  return os.str();
}

}  // namespace mgract
