#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "apn/errors.hpp"
#include "apn/random.hpp"
#include "apn/zsl.hpp"
#include "test_util.hpp"

namespace apn {
namespace {

using testing_util::random_tensor;

AttributeTable table(std::size_t classes, std::vector<std::size_t> seen, std::vector<std::size_t> unseen) {
  AttributeTable t;
  t.phi = random_tensor(Shape{classes, 4}, 77, 0.0, 1.0);
  t.seen_ids = std::move(seen);
  t.unseen_ids = std::move(unseen);
  t.groups = {{0, 1}, {2, 3}};
  return t;
}

Tensor scores_of(std::size_t classes, std::initializer_list<std::pair<std::size_t, double>> entries) {
  Tensor s(Shape{classes}, -1.0);
  for (const auto& [c, v] : entries) s[c] = v;
  return s;
}

TEST(ZslPredict, WorkedExamples) {
  const AttributeTable t = table(10, {0, 1, 2}, {7, 9});
  EXPECT_EQ(zsl_predict(scores_of(10, {{7, 0.8}, {9, 0.3}, {0, 5.0}}), t), 7u);
  const AttributeTable one = table(10, {0, 1, 2}, {4});
  EXPECT_EQ(zsl_predict(scores_of(10, {{0, 9.0}}), one), 4u);
  EXPECT_THROW(zsl_predict(scores_of(10, {}), table(10, {0, 1}, {})), ContractError);
  // Ties go to the smaller id.
  EXPECT_EQ(zsl_predict(scores_of(10, {{7, 0.5}, {9, 0.5}}), t), 7u);
}

TEST(ZslPredict, PositiveScaleInvariance) {
  const AttributeTable t = table(6, {0, 2, 4}, {1, 3, 5});
  const Tensor V = random_tensor(Shape{5, 4}, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor g = random_tensor(Shape{5}, seed);
    const std::size_t base = zsl_predict(g, V, t);
    g *= 3.7;
    EXPECT_EQ(zsl_predict(g, V, t), base);
  }
}

TEST(GzslPredict, WorkedExamples) {
  const AttributeTable t = table(4, {0, 1}, {2, 3});
  EXPECT_EQ(gzsl_predict(scores_of(4, {{0, 0.9}, {2, 0.8}}), t, 0.2), 2u);
  EXPECT_EQ(gzsl_predict(scores_of(4, {{0, 0.9}, {2, 0.8}}), t, 0.0), 0u);
  EXPECT_EQ(gzsl_predict(scores_of(4, {{0, 100.0}, {1, 50.0}, {2, -5.0}, {3, -1.0}}), t, 1e6), 3u);
}

// gamma = 0 is the plain argmax over every class, bit-exactly.
TEST(GzslPredict, ZeroGammaIsUnionArgmax) {
  const AttributeTable t = table(8, {0, 1, 4, 6}, {2, 3, 5, 7});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor s = random_tensor(Shape{8}, seed);
    const auto it = std::max_element(s.data().begin(), s.data().end());
    EXPECT_EQ(gzsl_predict(s, t, 0.0), std::size_t(it - s.data().begin()));
  }
}

TEST(PerClassTop1, Definition) {
  const std::vector<std::size_t> all{1, 1, 2};
  EXPECT_EQ(per_class_top1(all, all, std::vector<std::size_t>{1, 2}), 1.0);

  std::vector<std::size_t> preds(10, 0), labels(10, 0);
  preds.push_back(0);
  labels.push_back(1);
  EXPECT_EQ(per_class_top1(preds, labels, std::vector<std::size_t>{0, 1}), 0.5);

  std::vector<std::string> warnings;
  EXPECT_EQ(per_class_top1(preds, labels, std::vector<std::size_t>{0, 1, 5}, &warnings), 0.5);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(PerClassTop1, OrderAndRelabelInvariance) {
  Rng rng(5);
  std::vector<std::size_t> preds, labels;
  for (int i = 0; i < 200; ++i) {
    labels.push_back(rng.below(6));
    preds.push_back(rng.bernoulli(0.6) ? labels.back() : rng.below(6));
  }
  const std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5};
  const double ref = per_class_top1(preds, labels, ids);

  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> p2, l2;
  for (std::size_t i : order) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  EXPECT_EQ(per_class_top1(p2, l2, ids), ref);

  const std::vector<std::size_t> perm{3, 5, 0, 1, 4, 2};
  for (auto& v : p2) v = perm[v];
  for (auto& v : l2) v = perm[v];
  EXPECT_NEAR(per_class_top1(p2, l2, ids), ref, 1e-15);
}

TEST(HarmonicMean, ValuesAndBounds) {
  EXPECT_NEAR(harmonic_mean(0.693, 0.653), 0.672, 0.0005);
  EXPECT_NEAR(harmonic_mean(0.4, 0.4), 0.4, 1e-15);
  EXPECT_EQ(harmonic_mean(0.8, 0.0), 0.0);
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double s = rng.uniform(), u = rng.uniform();
    const double h = harmonic_mean(s, u);
    EXPECT_LE(h, std::min(2 * s, 2 * u) + 1e-15);
    EXPECT_LE(h, 0.5 * (s + u) + 1e-15);
    EXPECT_EQ(h, harmonic_mean(u, s));
  }
}

TEST(GammaGrid, Parsing) {
  const auto g = parse_gamma_grid("0:1:0.02");
  ASSERT_EQ(g.size(), 51u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_NEAR(g.back(), 1.0, 1e-12);
  EXPECT_EQ(parse_gamma_grid("0.7:0.7:0.1").size(), 1u);
  EXPECT_THROW(parse_gamma_grid("0:1"), ContractError);
  EXPECT_THROW(parse_gamma_grid("1:0:0.1"), ContractError);
  EXPECT_THROW(parse_gamma_grid("0:1:0"), ContractError);
}

struct SweepFixture {
  AttributeTable attrs = table(10, {0, 1, 2, 3, 4, 5}, {6, 7, 8, 9});
  std::vector<Tensor> scores;
  std::vector<std::size_t> labels;

  explicit SweepFixture(std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < 300; ++i) {
      const std::size_t y = rng.below(10);
      Tensor s = random_tensor(Shape{10}, seed * 1000 + i);
      s[y] += 0.8;
      for (std::size_t c : attrs.seen_ids) s[c] += 0.3;
      scores.push_back(s);
      labels.push_back(y);
    }
  }
};

// Raising gamma can only move predictions from seen to unseen classes.
TEST(CalibrationSweep, MonotoneColumns) {
  for (std::uint64_t seed = 1; seed < 6; ++seed) {
    SweepFixture f(seed);
    const auto grid = parse_gamma_grid("0:1:0.02");
    const CalibrationSweep sweep = calibration_sweep(f.scores, f.labels, f.attrs, grid);
    ASSERT_EQ(sweep.rows.size(), 51u);
    for (std::size_t r = 1; r < sweep.rows.size(); ++r) {
      EXPECT_GE(sweep.rows[r].acc_unseen, sweep.rows[r - 1].acc_unseen);
      EXPECT_LE(sweep.rows[r].acc_seen, sweep.rows[r - 1].acc_seen);
    }
    for (std::size_t r = 0; r < sweep.rows.size(); ++r) {
      EXPECT_LE(sweep.rows[sweep.best].harmonic, sweep.rows[sweep.best].harmonic);
      EXPECT_GE(sweep.rows[sweep.best].harmonic, sweep.rows[r].harmonic);
    }
    // Per-sample: an unseen prediction at gamma_1 stays the same at gamma_2 > gamma_1.
    for (std::size_t i = 0; i < f.scores.size(); ++i) {
      for (std::size_t r = 1; r < grid.size(); ++r) {
        const std::size_t a = gzsl_predict(f.scores[i], f.attrs, grid[r - 1]);
        if (!f.attrs.is_seen(a)) EXPECT_EQ(gzsl_predict(f.scores[i], f.attrs, grid[r]), a);
      }
    }
  }
}

TEST(CalibrationSweep, SinglePointGrids) {
  SweepFixture f(9);
  const std::vector<double> g07{0.7};
  const CalibrationSweep s = calibration_sweep(f.scores, f.labels, f.attrs, g07);
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows[0].gamma, 0.7);
  const EvalReport direct = evaluate_gzsl(f.scores, f.labels, f.attrs, 0.7);
  EXPECT_EQ(s.rows[0].harmonic, direct.harmonic);
  EXPECT_EQ(direct.harmonic, harmonic_mean(direct.acc_seen, direct.acc_unseen));

  std::ostringstream os;
  write_sweep_csv(os, s);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "gamma,s,u,H");
}

TEST(EvaluateZsl, UsesOnlyUnseenSamples) {
  const AttributeTable t = table(4, {0, 1}, {2, 3});
  const std::vector<Tensor> scores{scores_of(4, {{2, 1.0}}), scores_of(4, {{3, 1.0}}), scores_of(4, {{2, 1.0}}),
                                   scores_of(4, {{0, 1.0}})};
  const std::vector<std::size_t> labels{2, 2, 3, 0};
  const EvalReport r = evaluate_zsl(scores, labels, t);
  EXPECT_EQ(r.per_class_acc.at(2), 0.5);
  EXPECT_EQ(r.per_class_acc.at(3), 0.0);
  EXPECT_EQ(r.top1, 0.25);
  EXPECT_EQ(r.per_class_acc.count(0), 0u);
}

TEST(BinaryAttributes, ThresholdConvention) {
  EXPECT_EQ(predict_binary_attributes(Tensor(Shape{2}, {0.49, 0.5})).bits, (std::vector<int>{0, 1}));
  const Tensor truth(Shape{3}, 1.0);
  EXPECT_EQ(predict_binary_attributes(Tensor(Shape{3}, 0.7), &truth).accuracy, 1.0);
  const Tensor mixed(Shape{4}, {1, 0, 1, 0});
  EXPECT_EQ(predict_binary_attributes(Tensor(Shape{4}, {0.9, 0.9, 0.1, 0.1}), &mixed).accuracy, 0.5);
}

}  // namespace
}  // namespace apn
