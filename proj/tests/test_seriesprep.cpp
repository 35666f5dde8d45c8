#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "hpf/seriesprep.hpp"

using namespace hpf;
using namespace hpf::prep;

namespace {

MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = 100.0, double hi = 50000.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST(Normalize, PerDistrictEndpoints) {
  MatrixXd m(3, 1);
  m << 100, 200, 300;
  const auto n = normalize(m, NormScope::per_district);
  EXPECT_EQ(n.values(0, 0), 0.0);
  EXPECT_EQ(n.values(1, 0), 0.5);
  EXPECT_EQ(n.values(2, 0), 1.0);
}

TEST(Normalize, GlobalScopeUsesOverallExtremes) {
  MatrixXd m(2, 2);
  m << 10, 50, 30, 110;
  const auto n = normalize(m, NormScope::global);
  EXPECT_EQ(n.values(0, 0), 0.0);
  EXPECT_EQ(n.values(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(n.values(0, 1), 0.4);
  EXPECT_DOUBLE_EQ(n.params.lo_for(1), 10.0);
}

TEST(Normalize, InversePairProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MatrixXd m = random_matrix(40, 7, seed);
    for (auto scope : {NormScope::per_district, NormScope::global}) {
      const auto n = normalize(m, scope);
      const MatrixXd back = n.params.invert(n.values);
      EXPECT_LT(((back - m).array().abs() / m.array().abs()).maxCoeff(), 1e-12);
      EXPECT_GE(n.values.minCoeff(), 0.0);
      EXPECT_LE(n.values.maxCoeff(), 1.0);
      const VectorXd col = n.params.invert_column(n.values.col(3), 3);
      EXPECT_LT((col - m.col(3)).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Normalize, ConstantColumnNamesDistrict) {
  MatrixXd m(3, 2);
  m << 1, 5, 2, 5, 3, 5;
  try {
    normalize(m, NormScope::per_district, {"haidian", "xicheng"});
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("xicheng"), std::string::npos);
  }
  EXPECT_NO_THROW(normalize(m, NormScope::global));
}

TEST(Normalize, LeakageSafeFitsTrainingRowsOnly) {
  MatrixXd m(4, 1);
  m << 0, 10, 5, 20;
  const auto n = normalize(m, NormScope::per_district, {}, 3);
  EXPECT_EQ(n.params.hi_for(0), 10.0);
  EXPECT_EQ(n.values(3, 0), 2.0);
}

TEST(Windows, CountsAndContents) {
  const MatrixXd m = random_matrix(154, 3, 1, 0.0, 1.0);
  const auto ds = make_windows(m, 15);
  EXPECT_EQ(ds.size(), 139);
  for (Index k : {Index{0}, Index{77}, Index{138}}) {
    EXPECT_EQ(MatrixXd(ds.window(k)), m.middleRows(k, 15));
    EXPECT_EQ(VectorXd(ds.target(k)), VectorXd(m.row(k + 15).transpose()));
  }
}

TEST(Windows, SingleWindowAndBoundary) {
  const MatrixXd m = random_matrix(16, 1, 2, 0.0, 1.0);
  const auto ds = make_windows(m, 15);
  ASSERT_EQ(ds.size(), 1);
  EXPECT_EQ(MatrixXd(ds.window(0)), m.topRows(15));
  EXPECT_EQ(ds.target(0)(0), m(15, 0));
  EXPECT_THROW(make_windows(m.topRows(15), 15), DomainError);
  EXPECT_THROW(make_windows(m, 0), DomainError);
}

TEST(Windows, WindowsAreViews) {
  const auto ds = make_windows(random_matrix(20, 2, 3, 0.0, 1.0), 5);
  EXPECT_EQ(ds.window(3).data(), ds.source().data() + 3);
}

TEST(Split, ChronologicalPartition) {
  auto ds = split(make_windows(random_matrix(154, 1, 4, 0.0, 1.0), 15), 14);
  EXPECT_EQ(ds.train.size(), 125u);
  EXPECT_EQ(ds.validation.size(), 14u);
  EXPECT_EQ(ds.validation.front(), 125);
  EXPECT_EQ(*std::max_element(ds.train.begin(), ds.train.end()) + 1, ds.validation.front());
  for (Index n_val = 0; n_val < 30; ++n_val) {
    auto d = split(make_windows(random_matrix(60, 1, 5, 0.0, 1.0), 15), n_val);
    std::set<Index> all(d.train.begin(), d.train.end());
    for (Index k : d.validation) EXPECT_TRUE(all.insert(k).second);
    EXPECT_EQ(static_cast<Index>(all.size()), d.size());
    EXPECT_EQ(*all.begin(), 0);
    EXPECT_EQ(*all.rbegin(), d.size() - 1);
  }
}

TEST(Split, EdgeCases) {
  const auto ds = make_windows(random_matrix(25, 1, 6, 0.0, 1.0), 15);
  const auto all = split(ds, 0);
  EXPECT_EQ(all.train.size(), 10u);
  EXPECT_TRUE(all.validation.empty());
  EXPECT_THROW(split(ds, 10), DomainError);
  EXPECT_THROW(split(ds, -1), DomainError);
}

TEST(StatefulLayout, DefaultShape) {
  const auto layout = stateful_reshape(make_windows(random_matrix(154, 1, 7, 0.0, 1.0), 15));
  EXPECT_EQ(layout.used_samples(), 135);
  EXPECT_EQ(layout.dataset.size() - layout.used_samples(), 4);
  EXPECT_EQ(layout.train_positions(), 125);
  EXPECT_EQ(layout.test_positions(), 10);
  std::set<Index> seen;
  for (Index lane = 0; lane < 5; ++lane) {
    for (Index s = 0; s < 27; ++s) seen.insert(layout.sample(lane, s));
  }
  EXPECT_EQ(seen.size(), 135u);
  EXPECT_EQ(*seen.rbegin(), 134);
  EXPECT_EQ(layout.sample(1, 0), 27);
}

TEST(StatefulLayout, SingleLaneIsOriginalOrder) {
  const auto layout = stateful_reshape(make_windows(random_matrix(40, 1, 8, 0.0, 1.0), 15), 1, 25, 20);
  for (Index s = 0; s < 25; ++s) EXPECT_EQ(layout.sample(0, s), s);
}

TEST(StatefulLayout, RejectsBadShapes) {
  const auto ds = make_windows(random_matrix(154, 1, 9, 0.0, 1.0), 15);
  EXPECT_THROW(stateful_reshape(ds, 5, 28, 25), DomainError);
  EXPECT_THROW(stateful_reshape(ds, 5, 27, 28), DomainError);
  EXPECT_THROW(stateful_reshape(ds, 0, 27, 25), DomainError);
}
