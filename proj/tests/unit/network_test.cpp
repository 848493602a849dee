#include "fixtures.hpp"
#include "oracles.hpp"

#include <stabkit/error.hpp>
#include <stabkit/network.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>

using namespace stabkit;

namespace {

DenseNetwork tiny() {
  Matrix w1(2, 2);
  w1 << 1.0, -1.0, 2.0, 0.5;
  Matrix w2(1, 2);
  w2 << 1.0, -3.0;
  return DenseNetwork(2, {{w1, Vector{{0.0, -1.0}}, Activation::ReLU},
                          {w2, Vector{{0.5}}, Activation::Linear}});
}

}  // namespace

TEST(Network, ForwardByHand) {
  const DenseNetwork net = tiny();
  // h = relu([1-2, 2+1-1]) = [0, 2]; y = 0 - 6 + 0.5
  EXPECT_DOUBLE_EQ(net.forward(Vector{{1.0, 2.0}})(0), -5.5);
  // h = relu([3-1, 6+0.5-1]) = [2, 5.5]; y = 2 - 16.5 + 0.5
  EXPECT_DOUBLE_EQ(net.forward(Vector{{3.0, 1.0}})(0), -14.0);
}

TEST(Network, BatchMatchesSingle) {
  const DenseNetwork net = fixtures::random_net({4, 7, 5, 3}, 11);
  const auto pts = fixtures::random_points(4, 16, 3.0, 12);
  Matrix xs(4, 16);
  for (int c = 0; c < 16; ++c) xs.col(c) = pts[static_cast<std::size_t>(c)];
  const Matrix ys = net.forward_batch(xs);
  for (int c = 0; c < 16; ++c)
    EXPECT_TRUE(ys.col(c).isApprox(net.forward(pts[static_cast<std::size_t>(c)]), 1e-14));
}

TEST(Network, TraceRecordsEveryLayer) {
  const DenseNetwork net = tiny();
  const auto t = net.trace(Vector{{3.0, 1.0}});
  ASSERT_EQ(t.pre.size(), 2u);
  EXPECT_DOUBLE_EQ(t.pre[0](0), 2.0);
  EXPECT_DOUBLE_EQ(t.post[0](1), 5.5);
  EXPECT_DOUBLE_EQ(t.post[1](0), -14.0);
}

TEST(Network, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const DenseNetwork net = fixtures::random_net({3, 6, 6, 2}, 100 + s);
    for (const auto& x : fixtures::random_points(3, 5, 4.0, 200 + s)) {
      for (std::size_t i = 0; i < 2; ++i) {
        for (Direction d : {Direction::Up, Direction::Down}) {
          const Vector g = net.gradient(x, i, d);
          const Vector fd = oracle::finite_difference_gradient(net, x, i, sign_of(d));
          EXPECT_LE((g - fd).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + g.cwiseAbs().maxCoeff()));
        }
      }
    }
  }
}

TEST(Network, ValueAndGradientAgree) {
  const DenseNetwork net = fixtures::random_net({3, 5, 2}, 3);
  const Vector x{{0.3, -1.2, 2.0}};
  const auto [v, g] = net.value_and_gradient(x, 1, Direction::Down);
  EXPECT_EQ(v, net.forward(x));
  EXPECT_TRUE(g.isApprox(net.gradient(x, 1, Direction::Down)));
}

TEST(Network, RejectsBadShapes) {
  EXPECT_THROW(DenseNetwork(2, {}), ValidationError);
  EXPECT_THROW(DenseNetwork(3, {{Matrix::Ones(1, 2), Vector::Zero(1), Activation::Linear}}),
               ValidationError);
  EXPECT_THROW(DenseNetwork(2, {{Matrix::Ones(1, 2), Vector::Zero(2), Activation::Linear}}),
               ValidationError);
  const DenseNetwork net = tiny();
  EXPECT_THROW(net.forward(Vector::Zero(3)), DimensionError);
  EXPECT_THROW(net.gradient(Vector::Zero(2), 1), DimensionError);
}

TEST(Network, JsonRoundTripIsExact) {
  const DenseNetwork net = fixtures::random_net({5, 9, 4, 3}, 77, 2.0, true);
  const DenseNetwork back = network_from_json(nlohmann::json::parse(network_to_json(net).dump()));
  ASSERT_EQ(back.num_layers(), net.num_layers());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    EXPECT_EQ(back.layer(i).weights, net.layer(i).weights);
    EXPECT_EQ(back.layer(i).bias, net.layer(i).bias);
    EXPECT_EQ(back.layer(i).activation, net.layer(i).activation);
  }
}

TEST(Network, SaveLoadFile) {
  const auto path = std::filesystem::temp_directory_path() / "stabkit_network_test.json";
  const DenseNetwork net = fixtures::random_net({2, 3, 1}, 5);
  save_network(net, path);
  const DenseNetwork back = load_network(path);
  EXPECT_EQ(back.forward(Vector{{1.0, 2.0}}), net.forward(Vector{{1.0, 2.0}}));
  std::filesystem::remove(path);
}

TEST(Network, JsonErrorsNameTheField) {
  auto msg = [](const std::string& text) {
    try {
      network_from_json(nlohmann::json::parse(text));
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(msg(R"({"layers": []})").find("input_dim"), std::string::npos);
  EXPECT_NE(msg(R"({"input_dim": 2, "layers": [{"weights": [[1, 2]]}]})").find("bias"),
            std::string::npos);
  EXPECT_NE(msg(R"({"input_dim": 2, "layers": [{"weights": [[1, 2], [3]], "bias": [0, 0]}]})")
                .find("weights"),
            std::string::npos);
  EXPECT_NE(msg(R"({"input_dim": 2, "layers": [{"weights": [[1, 2]], "bias": [0],
                   "activation": "tanh"}]})")
                .find("activation"),
            std::string::npos);
}

TEST(Network, SgdStepReducesLoss) {
  DenseNetwork net = fixtures::random_net({2, 8, 1}, 9, 0.5);
  const auto pts = fixtures::random_points(2, 32, 1.0, 10);
  Matrix xs(2, 32), ys(1, 32);
  for (int c = 0; c < 32; ++c) {
    xs.col(c) = pts[static_cast<std::size_t>(c)];
    ys(0, c) = xs(0, c) - 2.0 * xs(1, c);
  }
  const double first = sgd_step(net, xs, ys, 0.01);
  double last = first;
  for (int k = 0; k < 200; ++k) last = sgd_step(net, xs, ys, 0.01);
  EXPECT_LT(last, first);
}
