#include "doctest.h"
#include "json.hpp"
#include "mgract/apriori.hpp"

using namespace mgract;

TEST_CASE("four-transaction fixture") {
  const std::vector<LabelSet> tx{{"A", "B"}, {"A", "B"}, {"A", "B"}, {"B"}};
  const auto rules = mine_associations(tx, 0.25, 0.25);
  const auto ab = std::find_if(rules.begin(), rules.end(), [](const AssociationRule& r) {
    return r.antecedent == LabelSet{"A"} && r.consequent == LabelSet{"B"};
  });
  REQUIRE(ab != rules.end());
  CHECK(ab->support == 0.75);
  CHECK(ab->confidence == 1.0);
  // B is in every transaction, so P(B) = 1 and the lift is exactly 1.
  CHECK(ab->lift == 1.0);
  const auto ba = std::find_if(rules.begin(), rules.end(), [](const AssociationRule& r) {
    return r.antecedent == LabelSet{"B"} && r.consequent == LabelSet{"A"};
  });
  REQUIRE(ba != rules.end());
  CHECK(ba->confidence == 0.75);
}

TEST_CASE("lift 4/3 once the consequent misses one of four transactions") {
  const std::vector<LabelSet> tx2{{"A", "B"}, {"A", "B"}, {"A", "B"}, {"C"}};
  const auto r2 = mine_associations(tx2, 0.25, 0.25);
  REQUIRE(!r2.empty());
  CHECK(r2[0].support == 0.75);
  CHECK(r2[0].confidence == 1.0);
  CHECK(r2[0].lift == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("a single repeated label yields no rules") {
  CHECK(mine_associations({{"A"}, {"A"}, {"A"}}, 0.25, 0.25).empty());
}

TEST_CASE("constructed corpus reproduces confidence 0.776 and lift 17.4") {
  // 2175 transactions: 97 {Movement, WrongPosition}, 28 {Movement}, the rest
  // {Other}. conf = 97/125, lift = 97 * 2175 / (125 * 97).
  std::vector<LabelSet> tx;
  for (int i = 0; i < 97; ++i) tx.push_back({"Movement", "WrongPosition"});
  for (int i = 0; i < 28; ++i) tx.push_back({"Movement"});
  for (int i = 0; i < 2050; ++i) tx.push_back({"Other"});
  const auto rules = mine_associations(tx, 0.025, 0.25);
  const auto it = std::find_if(rules.begin(), rules.end(), [](const AssociationRule& r) {
    return r.antecedent == LabelSet{"Movement"} && r.consequent == LabelSet{"WrongPosition"};
  });
  REQUIRE(it != rules.end());
  CHECK(std::abs(it->confidence - 0.776) <= 1e-9);
  CHECK(std::abs(it->lift - 17.4) <= 1e-9);
}

TEST_CASE("thresholds are compared on exact counts") {
  // support of {A,B} is exactly 1/40 = 0.025
  std::vector<LabelSet> tx{{"A", "B"}};
  for (int i = 0; i < 39; ++i) tx.push_back({"C", "D"});
  const auto rules = mine_associations(tx, 0.025, 0.25);
  CHECK(std::any_of(rules.begin(), rules.end(), [](const AssociationRule& r) { return r.antecedent == LabelSet{"A"}; }));
  for (const auto& r : rules) {
    CHECK(r.count * 40 >= r.transactions);
    CHECK(r.confidence >= 0.25);
    CHECK(r.lift > 0);
  }
}

TEST_CASE("three-item sets and deterministic order") {
  std::vector<LabelSet> tx;
  for (int i = 0; i < 5; ++i) tx.push_back({"A", "B", "C"});
  for (int i = 0; i < 3; ++i) tx.push_back({"A", "B"});
  for (int i = 0; i < 2; ++i) tx.push_back({"C"});
  const auto rules = mine_associations(tx, 0.1, 0.25);
  CHECK(std::any_of(rules.begin(), rules.end(), [](const AssociationRule& r) { return r.antecedent.size() == 2; }));
  for (std::size_t i = 1; i < rules.size(); ++i) {
    CHECK((rules[i - 1].lift > rules[i].lift ||
           (rules[i - 1].lift == rules[i].lift && rules[i - 1].confidence >= rules[i].confidence)));
  }
  CHECK(rules_json(rules, 0.1, 0.25) == rules_json(mine_associations(tx, 0.1, 0.25), 0.1, 0.25));
}

TEST_CASE("input validation and parsing") {
  CHECK_THROWS_AS(mine_associations({{"A"}}, 0.0, 0.5), MiningError);
  CHECK_THROWS_AS(mine_associations({{"A"}}, 0.5, 1.5), MiningError);
  CHECK_THROWS_AS(mine_associations({}, 0.5, 0.5), MiningError);
  const auto tx = parse_transactions("# header\nB, A ,A\n\nC;D\n");
  REQUIRE(tx.size() == 2u);
  CHECK(tx[0] == LabelSet{"A", "B"});
  CHECK(tx[1] == LabelSet{"C", "D"});
}
