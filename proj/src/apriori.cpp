#include "mgract/apriori.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mgract {

using nlohmann::json;

namespace {

bool contains_all(const LabelSet& txn, const LabelSet& items) {
  return std::includes(txn.begin(), txn.end(), items.begin(), items.end());
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<AssociationRule> mine_associations(const std::vector<LabelSet>& transactions, double min_support,
                                               double min_confidence) {
  if (transactions.empty()) throw MiningError("no transactions");
  if (!(min_support > 0.0 && min_support <= 1.0)) throw MiningError("min_support must lie in (0,1]");
  if (!(min_confidence > 0.0 && min_confidence <= 1.0)) throw MiningError("min_confidence must lie in (0,1]");

  std::vector<LabelSet> txns;
  txns.reserve(transactions.size());
  for (LabelSet t : transactions) {
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    txns.push_back(std::move(t));
  }
  const std::size_t n = txns.size();
  const double total = static_cast<double>(n);
  auto frequent = [&](std::size_t count) { return static_cast<double>(count) / total >= min_support; };

  std::map<LabelSet, std::size_t> counts;  // every frequent itemset
  std::map<LabelSet, std::size_t> level;
  {
    std::map<std::string, std::size_t> singles;
    for (const LabelSet& t : txns) {
      for (const std::string& item : t) ++singles[item];
    }
    for (const auto& [item, c] : singles) {
      if (frequent(c)) level[{item}] = c;
    }
  }
  while (!level.empty()) {
    counts.insert(level.begin(), level.end());
    // Join step: merge itemsets sharing all but the last item, then prune
    // candidates with an infrequent subset.
    std::vector<LabelSet> prev;
    for (const auto& [s, c] : level) prev.push_back(s);
    std::set<LabelSet> candidates;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      for (std::size_t j = i + 1; j < prev.size(); ++j) {
        if (!std::equal(prev[i].begin(), prev[i].end() - 1, prev[j].begin())) continue;
        LabelSet cand = prev[i];
        cand.push_back(prev[j].back());
        bool ok = true;
        for (std::size_t drop = 0; drop < cand.size() && ok; ++drop) {
          LabelSet sub = cand;
          sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
          ok = level.count(sub) > 0;
        }
        if (ok) candidates.insert(std::move(cand));
      }
    }
    std::map<LabelSet, std::size_t> next;
    for (const LabelSet& cand : candidates) {
      std::size_t c = 0;
      for (const LabelSet& t : txns) c += contains_all(t, cand) ? 1 : 0;
      if (frequent(c)) next[cand] = c;
    }
    level = std::move(next);
  }

  std::vector<AssociationRule> rules;
  for (const auto& [items, count] : counts) {
    if (items.size() < 2) continue;
    const std::size_t m = items.size();
    for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << m); ++mask) {
      AssociationRule r;
      for (std::size_t b = 0; b < m; ++b) ((mask >> b) & 1 ? r.antecedent : r.consequent).push_back(items[b]);
      r.count = count;
      r.antecedent_count = counts.at(r.antecedent);
      r.consequent_count = counts.at(r.consequent);
      r.transactions = n;
      r.support = static_cast<double>(count) / total;
      r.confidence = static_cast<double>(count) / static_cast<double>(r.antecedent_count);
      if (!(r.confidence >= min_confidence)) continue;
      r.lift = r.confidence / (static_cast<double>(r.consequent_count) / total);
      rules.push_back(std::move(r));
    }
  }
  std::sort(rules.begin(), rules.end(), [](const AssociationRule& a, const AssociationRule& b) {
    if (a.lift != b.lift) return a.lift > b.lift;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.support != b.support) return a.support > b.support;
    if (a.antecedent != b.antecedent) return a.antecedent < b.antecedent;
    return a.consequent < b.consequent;
  });
  return rules;
}

std::vector<LabelSet> parse_transactions(std::string_view text) {
  std::vector<LabelSet> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ';', ',');
    LabelSet t;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      field = trim(field);
      if (!field.empty()) t.push_back(field);
    }
    if (t.empty()) continue;
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    out.push_back(std::move(t));
  }
  return out;
}

std::string rules_json(const std::vector<AssociationRule>& rules, double min_support, double min_confidence,
                       const std::string& provenance_json) {
  json doc;
  doc["version"] = 1;
  doc["min_support"] = min_support;
  doc["min_confidence"] = min_confidence;
  json arr = json::array();
  for (const AssociationRule& r : rules) {
    arr.push_back({{"antecedent", r.antecedent},
                   {"consequent", r.consequent},
                   {"support", r.support},
                   {"confidence", r.confidence},
                   {"lift", r.lift},
                   {"count", r.count},
                   {"antecedent_count", r.antecedent_count},
                   {"consequent_count", r.consequent_count},
                   {"transactions", r.transactions}});
  }
  doc["rules"] = arr;
  if (!provenance_json.empty()) doc["provenance"] = json::parse(provenance_json);
  return doc.dump(2);
}

}  // namespace mgract
