#include "fixtures.hpp"
#include "oracles.hpp"

#include <stabkit/error.hpp>
#include <stabkit/milp.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace stabkit;

namespace {

DenseNetwork single_relu() {
  return DenseNetwork(1, {{Matrix::Identity(1, 1), Vector::Zero(1), Activation::ReLU}});
}

PerturbationBox unit_box() { return {Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)}; }

DeltaBounds sym(double half, Eigen::Index k = 1) {
  return {Vector::Constant(k, -half), Vector::Constant(k, half),
          std::vector<Zone>(static_cast<std::size_t>(k), Zone::Knot)};
}

}  // namespace

TEST(Milp, SingleReluEncoding) {
  const DenseNetwork net = single_relu();
  const auto box = unit_box();
  const MilpModel m = encode_network(net, box, interval_propagate(net, box));
  EXPECT_EQ(m.num_phase_binaries(), 1u);
  ASSERT_EQ(m.binaries.size(), 1u);
  // one affine row plus four Big-M rows
  EXPECT_EQ(m.lp.num_constraints(), 5u);
  std::size_t with_binary = 0;
  for (const auto& c : m.lp.constraints())
    for (const auto& [v, coef] : c.terms)
      if (v == m.binaries[0].var) {
        ++with_binary;
        EXPECT_DOUBLE_EQ(std::abs(coef), 1.0);  // M = 1 on both sides
      }
  EXPECT_EQ(with_binary, 2u);
}

TEST(Milp, LinearNetHasNoBinaries) {
  const DenseNetwork net = fixtures::random_linear_net({3, 4, 2}, 9);
  const auto box = build_box(Vector{{1.0, 2.0, 3.0}}, 0.1);
  const MilpModel m = encode_network(net, box, interval_propagate(net, box));
  EXPECT_TRUE(m.binaries.empty());
  EXPECT_EQ(m.lp.num_variables(), 3u + 2u * 6u);
}

TEST(Milp, StableNeuronsAreEqualities) {
  const DenseNetwork net(1, {{Matrix::Identity(1, 1), Vector::Constant(1, 5.0), Activation::ReLU}});
  const auto box = unit_box();
  const MilpModel m = encode_network(net, box, interval_propagate(net, box));
  EXPECT_TRUE(m.binaries.empty());
  EXPECT_EQ(m.lp.constraints().back().relation, Relation::Equal);
}

TEST(Milp, IndicatorsAndCover) {
  const DenseNetwork net = fixtures::random_net({3, 5, 2}, 31);
  const Vector x{{1.0, -1.0, 0.5}};
  const auto box = build_box(x, 0.05);
  const MilpModel base = encode_network(net, box, interval_propagate(net, box));
  const MilpModel m = encode_negated_property(base, net.forward(x), sym(1.0, 2));
  EXPECT_EQ(m.binaries.size() - base.binaries.size(), 4u);
  EXPECT_EQ(m.indicator_below.size(), 2u);
  EXPECT_EQ(m.indicator_above.size(), 2u);
  EXPECT_EQ(m.lp.num_constraints() - base.lp.num_constraints(), 5u);  // 4 implications, 1 cover
  const auto& cover = m.lp.constraints().back();
  EXPECT_EQ(cover.relation, Relation::GreaterEqual);
  EXPECT_EQ(cover.terms.size(), 4u);
  EXPECT_DOUBLE_EQ(cover.rhs, 1.0);
}

TEST(Milp, MissingBoundsIsAnError) {
  const DenseNetwork net = fixtures::random_net({2, 3, 1}, 1);
  const PerturbationBox box{Vector::Zero(2), Vector::Ones(2)};
  EXPECT_THROW(encode_network(net, box, LayerBounds{}), EncodingError);
  MilpModel empty;
  EXPECT_THROW(encode_negated_property(empty, Vector::Zero(1), sym(1.0)), EncodingError);
}

TEST(Milp, BoundsInsideDeltasIsInfeasible) {
  // f(x) = 0.5 x on [-1, 1]: outputs in [-0.5, 0.5], deltas +-1 around f(0) = 0
  const DenseNetwork net(1, {{Matrix::Constant(1, 1, 0.5), Vector::Zero(1), Activation::Linear}});
  const auto box = unit_box();
  const MilpModel m = encode_negated_property(encode_network(net, box, interval_propagate(net, box)),
                                              Vector::Zero(1), sym(1.0));
  EXPECT_EQ(milp_solve(m).status.kind, SolveStatus::Kind::Infeasible);
}

TEST(Milp, SingleReluFalsifiedAndProved) {
  const DenseNetwork net = single_relu();
  const auto box = unit_box();
  const auto bounds = interval_propagate(net, box);
  const MilpModel tight =
      encode_negated_property(encode_network(net, box, bounds), Vector::Zero(1), sym(0.5), 1e-5, &net);
  const auto r = milp_solve(tight);
  ASSERT_EQ(r.status.kind, SolveStatus::Kind::Feasible);
  const double xp = r.status.assignment(static_cast<Eigen::Index>(tight.inputs[0]));
  EXPECT_GT(xp, 0.5);
  EXPECT_LE(xp, 1.0 + 1e-9);

  const MilpModel loose =
      encode_negated_property(encode_network(net, box, bounds), Vector::Zero(1), sym(1.5), 1e-5, &net);
  EXPECT_EQ(milp_solve(loose).status.kind, SolveStatus::Kind::Infeasible);
}

TEST(Milp, IdentityReachesBeyondTighterDeltas) {
  const DenseNetwork id(1, {{Matrix::Identity(1, 1), Vector::Zero(1), Activation::Linear}});
  const Vector x{{100.0}};
  const auto box = build_box(x, 0.05);
  const MilpModel m = encode_negated_property(encode_network(id, box, interval_propagate(id, box)),
                                              id.forward(x), sym(4.0), 1e-5, &id);
  const auto r = milp_solve(m);
  ASSERT_EQ(r.status.kind, SolveStatus::Kind::Feasible);
  const double xp = r.status.assignment(static_cast<Eigen::Index>(m.inputs[0]));
  EXPECT_GE(std::abs(xp - 100.0), 4.0);
}

TEST(Milp, ChildBoundsNeverExceedTheParent) {
  std::size_t checked = 0;
  for (const auto& fx : fixtures::small_corpus(6, 2, 55)) {
    for (const auto& x : fx.points) {
      const auto box = build_box(x, fx.property.p_inp);
      const Vector f_x = fx.net.forward(x);
      const MilpModel m = encode_negated_property(
          encode_network(fx.net, box, symbolic_propagate(fx.net, box).bounds), f_x,
          compute_deltas(f_x, fx.property), 1e-5, &fx.net);
      MilpOptions opts;
      opts.first_feasible = false;
      opts.on_node = [&](std::size_t, double parent, double child) {
        ++checked;
        EXPECT_LE(child, parent + 1e-6 * (1.0 + std::abs(parent)));
      };
      const auto r = milp_solve(m, opts);
      EXPECT_NE(r.status.kind, SolveStatus::Kind::TimedOut);
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Milp, AgreesWithPhaseEnumeration) {
  for (const auto& fx : fixtures::small_corpus(15, 3, 66)) {
    for (const auto& x : fx.points) {
      const auto box = build_box(x, fx.property.p_inp);
      const Vector f_x = fx.net.forward(x);
      const MilpModel m = encode_negated_property(
          encode_network(fx.net, box, symbolic_propagate(fx.net, box).bounds), f_x,
          compute_deltas(f_x, fx.property), 1e-5, &fx.net);
      const auto truth = oracle::phase_enumeration(fx.net, x, fx.property);
      // Violations smaller than the indicator margin are outside what the
      // encoding can see; the corpus avoids them.
      if (truth.falsified && truth.max_excess < 1e-5) continue;
      const auto kind = milp_solve(m).status.kind;
      EXPECT_EQ(kind, truth.falsified ? SolveStatus::Kind::Feasible : SolveStatus::Kind::Infeasible)
          << fx.name;
    }
  }
}

TEST(Milp, ZeroTimeoutTimesOut) {
  const auto& fx = fixtures::corpus()[4];
  const Vector& x = fx.points[0];
  const auto box = build_box(x, fx.property.p_inp);
  const Vector f_x = fx.net.forward(x);
  const MilpModel m = encode_negated_property(encode_network(fx.net, box, interval_propagate(fx.net, box)),
                                              f_x, compute_deltas(f_x, fx.property));
  MilpOptions opts;
  opts.timeout_s = 0.0;
  EXPECT_EQ(milp_solve(m, opts).status.kind, SolveStatus::Kind::TimedOut);
}
