#include "garde/simulator.hpp"
#include "garde/wls_localizer.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace garde;

namespace {

std::vector<double> dists_to(const std::vector<Point2>& anchors, const Point2& p) {
  std::vector<double> d;
  for (const auto& a : anchors) d.push_back(distance(a, p));
  return d;
}

const std::vector<Point2> kSquare{{0, 0}, {4, 0}, {0, 4}, {4, 4}};

}  // namespace

TEST(SelectReference, ArgminWithLowestIndexTies) {
  EXPECT_EQ(select_reference(std::vector<double>{3.1, 1.4, 2.2}), 1u);
  EXPECT_EQ(select_reference(std::vector<double>{2.0, 2.0, 5.0}), 0u);
  EXPECT_THROW(select_reference(std::vector<double>{}), DataError);
}

TEST(SelectReference, AgreesWithLinearScan) {
  std::mt19937 gen(21);
  std::uniform_int_distribution<int> len(1, 12), val(1, 6);  // small range forces ties
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> d(static_cast<std::size_t>(len(gen)));
    for (auto& x : d) x = val(gen);
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (d[i] < d[best]) best = i;
    }
    EXPECT_EQ(select_reference(d), best);
  }
}

TEST(WlsSolve, HandCheckableSquare) {
  const auto d = dists_to(kSquare, {1, 1});
  const auto p = WlsProblem::make(kSquare, d, d);
  EXPECT_EQ(p.reference_index, 0u);
  EXPECT_LT((wls_solve(p) - Point2(1, 1)).norm(), 1e-9);
}

TEST(WlsSolve, CollinearAnchorsAreSingular) {
  const std::vector<Point2> line{{0, 0}, {1, 0}, {2, 0}};
  const std::vector<double> d{1.0, 1.2, 1.9};
  EXPECT_THROW(wls_solve(WlsProblem::make(line, d, d)), NumericalError);
}

TEST(WlsSolve, InputValidation) {
  EXPECT_THROW(wls_solve(WlsProblem::make({{0, 0}, {1, 0}}, {1, 1}, {1, 1})), DataError);
  EXPECT_THROW(wls_solve(WlsProblem::make(kSquare, {1, 1, 1}, {1, 1, 1, 1})), DataError);
  EXPECT_THROW(wls_solve(WlsProblem::make(kSquare, {1, -1, 1, 1}, {1, 1, 1, 1})), DataError);
}

TEST(WlsSolve, MatchesExplicitNormalEquations) {
  std::mt19937 gen(22);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Point2> anchors(5);
    for (auto& a : anchors) a = {u(gen), u(gen)};
    const Point2 target(u(gen), u(gen));
    auto d = dists_to(anchors, target);
    for (auto& x : d) x = std::abs(x + nd(gen)) + 1e-2;
    std::vector<double> w(5);
    for (auto& x : w) x = u(gen) + 0.1;
    const Point2 expected = oracle::normal_equation_wls(anchors, d, w);
    EXPECT_LT((wls_solve(WlsProblem::make(anchors, d, w)) - expected).norm(), 1e-9);
  }
}

TEST(WlsSolve, NoiselessForAnyPositiveWeights) {
  std::mt19937 gen(23);
  std::uniform_real_distribution<double> u(0.0, 6.0), wu(1e-4, 10.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Point2> anchors(4);
    for (auto& a : anchors) a = {u(gen), u(gen)};
    const Point2 target(u(gen), u(gen));
    std::vector<double> w(4);
    for (auto& x : w) x = wu(gen);
    try {
      EXPECT_LT((wls_solve(WlsProblem::make(anchors, dists_to(anchors, target), w)) - target).norm(), 1e-7);
    } catch (const NumericalError&) {
      // near-collinear random draw; not a consistency violation
    }
  }
}

TEST(WlsSolve, EquivariantAndWeightScaleInvariant) {
  const std::vector<Point2> anchors{{0.3, 0.1}, {5.0, 0.7}, {4.2, 4.4}, {0.6, 3.9}, {2.5, 5.0}};
  const std::vector<double> d{2.1, 3.3, 2.8, 2.2, 2.9};
  const std::vector<double> w{1.0, 2.0, 0.5, 3.0, 1.5};
  const Point2 base = wls_solve(WlsProblem::make(anchors, d, w));

  const Point2 t(-7.0, 3.5);
  std::vector<Point2> shifted = anchors;
  for (auto& a : shifted) a += t;
  EXPECT_LT((wls_solve(WlsProblem::make(shifted, d, w)) - (base + t)).norm(), 1e-9);

  const auto rot = RigidTransform::rotation_about_origin(0.9);
  EXPECT_LT((wls_solve(WlsProblem::make(rot.apply(anchors), d, w)) - rot.apply(base)).norm(), 1e-9);

  std::vector<double> scaled = w;
  for (auto& x : scaled) x *= 37.0;
  EXPECT_LT((wls_solve(WlsProblem::make(anchors, d, scaled)) - base).norm(), 1e-10);
}

TEST(WlsSolve, ZeroWeightDistanceIsClamped) {
  const auto d = dists_to(kSquare, {1, 1});
  std::vector<double> w = d;
  w[2] = 0.0;
  EXPECT_LT((wls_solve(WlsProblem::make(kSquare, d, w)) - Point2(1, 1)).norm(), 1e-9);
}

TEST(LocalizeAllSources, NoiselessRecovery) {
  const std::vector<Point2> nodes{{0, 0}, {4, 0}, {4, 4}, {0, 4}};
  const Geometry g{nodes, {{1, 1}, {3, 0.5}, {2, 2.5}, {0.5, 3.5}, {3.5, 3.2}}};
  const auto got = localize_all_sources(g.nodes, exact_observations(g));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_LT((got[k] - g.sources[k]).norm(), 1e-9);
}

TEST(LocalizeAllSources, UsesOnlyValidEntries) {
  const Geometry g{{{0, 0}, {4, 0}, {4, 4}, {0, 4}}, {{1, 1}, {3, 2}}};
  auto obs = exact_observations(g);
  Eigen::MatrixXd d = obs.distances();
  MaskMatrix mask = obs.mask();
  mask(2, 0) = false;
  d(2, 0) = 50.0;  // would ruin the fit if it were used
  const auto got = localize_all_sources(g.nodes, ObservationSet(d, mask));
  EXPECT_LT((got[0] - g.sources[0]).norm(), 1e-9);
}

TEST(LocalizeAllSources, MatchesPerColumnOracle) {
  std::mt19937 gen(24);
  Scenario s;
  s.source_count = 30;
  s.rng_seed = 24;
  const Geometry g = generate_scenario(s);
  NoiseModel noise;
  noise.sigma_d = 0.1;
  const auto obs = synthesize_observations(g, noise, 5);
  const auto got = localize_all_sources(g.nodes, obs);
  for (std::size_t k = 0; k < g.source_count(); ++k) {
    std::vector<double> d;
    for (std::size_t n = 0; n < g.node_count(); ++n) d.push_back(obs.distance(n, k));
    EXPECT_LT((got[k] - oracle::normal_equation_wls(g.nodes, d, d)).norm(), 1e-9);
  }
}

TEST(LocalizeAllSources, ErrorNamesTheSource) {
  const Geometry g{{{0, 0}, {1, 0}, {2, 0}}, {{1, 1}, {0.5, 2}}};
  try {
    localize_all_sources(g.nodes, exact_observations(g));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("source 0"), std::string::npos) << e.what();
  }
}

TEST(LocalizeAllNodes, RoleSymmetry) {
  const Geometry g{{{1, 1}, {3, 0.5}, {2, 2.5}, {0.5, 3.5}, {3.5, 3.2}}, {{0, 0}, {4, 0}, {4, 4}, {0, 4}}};
  const auto got = localize_all_nodes(g, exact_observations(g));
  for (std::size_t n = 0; n < 5; ++n) EXPECT_LT((got[n] - g.nodes[n]).norm(), 1e-9);
}

TEST(LocalizeAllNodes, UsesModelDistanceWeightsAndSubset) {
  Scenario s;
  s.source_count = 12;
  s.rng_seed = 25;
  const Geometry truth = generate_scenario(s);
  NoiseModel noise;
  noise.sigma_d = 0.1;
  const auto obs = synthesize_observations(truth, noise, 6);
  Geometry current = truth;
  current.nodes[1] += Point2(0.3, -0.2);
  const std::vector<std::size_t> subset{0, 2, 3, 5, 7, 8, 11};
  const auto got = localize_all_nodes(current, obs, subset);
  for (std::size_t n = 0; n < truth.node_count(); ++n) {
    std::vector<Point2> anchors;
    std::vector<double> d, w;
    for (const auto k : subset) {
      anchors.push_back(current.sources[k]);
      d.push_back(obs.distance(n, k));
      w.push_back(distance(current.nodes[n], current.sources[k]));
    }
    EXPECT_LT((got[n] - oracle::normal_equation_wls(anchors, d, w)).norm(), 1e-9);
  }
}

TEST(LocalizeAllNodes, EqualWeightsGiveUnweightedSolve) {
  // Nodes all at the same point make every model distance to a source equal
  // only if sources are equidistant; use a single node at the circle centre.
  const double pi = std::acos(-1.0);
  Geometry current{{{0, 0}}, {}};
  for (int k = 0; k < 6; ++k) current.sources.emplace_back(2 * std::cos(k * pi / 3), 2 * std::sin(k * pi / 3));
  Eigen::MatrixXd d(1, 6);
  d << 2.1, 1.9, 2.05, 2.2, 1.8, 2.0;
  const auto got = localize_all_nodes(current, ObservationSet(d));
  std::vector<double> dv(d.data(), d.data() + 6);
  const std::vector<double> ones(6, 1.0);
  EXPECT_LT((got[0] - oracle::normal_equation_wls(current.sources, dv, ones)).norm(), 1e-10);
}
