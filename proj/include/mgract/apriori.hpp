#pragma once

// Classical Apriori over label-set transactions with rule extraction.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mgract {

class MiningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LabelSet = std::vector<std::string>;  // sorted, unique

struct AssociationRule {
  LabelSet antecedent;
  LabelSet consequent;
  std::size_t count = 0;             // transactions containing both sides
  std::size_t antecedent_count = 0;
  std::size_t consequent_count = 0;
  std::size_t transactions = 0;
  double support = 0;     // count / transactions
  double confidence = 0;  // count / antecedent_count
  double lift = 0;        // confidence / (consequent_count / transactions)
};

/// Every rule X -> Y with X, Y disjoint and non-empty, X u Y frequent,
/// support >= min_support and confidence >= min_confidence. Thresholds are
/// checked against the same count ratios that are reported. Ordered by
/// lift, confidence, support (descending), then antecedent and consequent.
std::vector<AssociationRule> mine_associations(const std::vector<LabelSet>& transactions, double min_support,
                                               double min_confidence);

/// One transaction per non-empty line; labels separated by ',' or ';'.
/// Lines starting with '#' are skipped.
std::vector<LabelSet> parse_transactions(std::string_view text);

std::string rules_json(const std::vector<AssociationRule>& rules, double min_support, double min_confidence,
                       const std::string& provenance_json = {});

}  // namespace mgract
