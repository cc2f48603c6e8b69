#include <catch_amalgamated.hpp>

#include "seqcsg/metrics.hpp"
#include "seqcsg/nn.hpp"
#include "seqcsg/synth.hpp"
#include "support/oracles.hpp"

using namespace seqcsg;

namespace {

constexpr int kNeg = static_cast<int>(Label::Negative);
constexpr int kNeu = static_cast<int>(Label::Neutral);
constexpr int kPos = static_cast<int>(Label::Positive);

MetricsReport report_of(const std::vector<int>& gold,
                        const std::vector<int>& pred) {
  MetricsReport r;
  for (std::size_t i = 0; i < gold.size(); ++i) r.add(gold[i], pred[i]);
  return r;
}

}  // namespace

TEST_CASE("all-correct predictions score perfectly") {
  auto r = report_of({kPos, kNeu, kNeg, kPos, kPos, kNeu, kNeg, kNeu, kPos, kNeg},
                     {kPos, kNeu, kNeg, kPos, kPos, kNeu, kNeg, kNeu, kPos, kNeg});
  CHECK(r.accuracy() == 1.0);
  CHECK(r.macro_f1() == 1.0);
}

TEST_CASE("the worked four-sample example") {
  // gold pos,pos,neu,neg / predicted pos,neu,neu,pos
  auto r = report_of({kPos, kPos, kNeu, kNeg}, {kPos, kNeu, kNeu, kPos});
  CHECK(r.accuracy() == 0.5);
  CHECK_THAT(r.f1(kPos), Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(r.f1(kNeu), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  CHECK(r.f1(kNeg) == 0.0);
  CHECK_THAT(r.macro_f1(), Catch::Matchers::WithinAbs(0.3889, 1e-4));
}

TEST_CASE("accuracy is recomputable from the stored confusion matrix") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> gold, pred;
    const int n = 1 + static_cast<int>(rng.index(50));
    for (int i = 0; i < n; ++i) {
      gold.push_back(static_cast<int>(rng.index(3)));
      pred.push_back(static_cast<int>(rng.index(3)));
    }
    auto r = report_of(gold, pred);
    std::int64_t trace = 0, total = 0;
    for (int g = 0; g < kLabelCount; ++g)
      for (int p = 0; p < kLabelCount; ++p) {
        total += r.confusion[g][p];
        if (g == p) trace += r.confusion[g][p];
      }
    CHECK(r.accuracy() == static_cast<double>(trace) / static_cast<double>(total));
  }
}

TEST_CASE("macro-F1 equals the independent averager exactly") {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> gold, pred;
    const int n = 1 + static_cast<int>(rng.index(50));
    for (int i = 0; i < n; ++i) {
      gold.push_back(static_cast<int>(rng.index(3)));
      pred.push_back(static_cast<int>(rng.index(3)));
    }
    auto r = report_of(gold, pred);
    CHECK(r.macro_f1() == oracles::independent_macro_f1(gold, pred));
    CHECK(r.accuracy() == oracles::independent_accuracy(gold, pred));
  }
}

TEST_CASE("a class absent from gold and predictions contributes zero") {
  auto r = report_of({kNeu, kNeu, kNeu}, {kNeu, kNeu, kNeu});
  CHECK(r.f1(kNeu) == 1.0);
  CHECK(r.f1(kPos) == 0.0);
  CHECK(r.f1(kNeg) == 0.0);
  CHECK_THAT(r.macro_f1(), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("metric accumulation is order-independent and mergeable") {
  Rng rng(5);
  std::vector<int> gold, pred;
  for (int i = 0; i < 40; ++i) {
    gold.push_back(static_cast<int>(rng.index(3)));
    pred.push_back(static_cast<int>(rng.index(3)));
  }
  auto direct = report_of(gold, pred);
  // reversed order
  std::vector<int> gold_r(gold.rbegin(), gold.rend());
  std::vector<int> pred_r(pred.rbegin(), pred.rend());
  auto reversed = report_of(gold_r, pred_r);
  CHECK(direct.confusion == reversed.confusion);
  // sharded and merged
  MetricsReport a, b;
  for (int i = 0; i < 40; ++i)
    (i % 2 ? a : b).add(gold[i], pred[i]);
  a.merge(b);
  CHECK(a.confusion == direct.confusion);
}

TEST_CASE("labels outside the class set are rejected") {
  MetricsReport r;
  CHECK_THROWS_AS(r.add(3, 0), ContractViolation);
  CHECK_THROWS_AS(r.add(0, -1), ContractViolation);
}

TEST_CASE("all-neutral predictions on the packaged test split") {
  auto bundle = make_benchmark("twitter2015", 4);
  MetricsReport r;
  for (const auto& s : bundle.test.samples)
    r.add(static_cast<int>(s.label), kNeu);
  CHECK(r.total() == 1037);
  CHECK(r.accuracy() == 607.0 / 1037.0);
}
