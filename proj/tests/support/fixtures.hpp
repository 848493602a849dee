#pragma once

#include <stabkit/lp.hpp>
#include <stabkit/network.hpp>
#include <stabkit/property.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fixtures {

using stabkit::DenseNetwork;
using stabkit::Vector;

struct Fixture {
  std::string name;
  DenseNetwork net;
  std::vector<Vector> points;
  stabkit::StabilityConfig property;
};

/// Dense random net with ReLU hidden layers, seeded. `last_relu` puts a
/// ReLU on the output layer too.
DenseNetwork random_net(const std::vector<std::size_t>& widths, std::uint64_t seed,
                        double weight_scale = 1.0, bool last_relu = false);

/// All-linear net with the given widths.
DenseNetwork random_linear_net(const std::vector<std::size_t>& widths, std::uint64_t seed);

/// Points uniform in [-range, range]^dim, each coordinate kept away from 0.
std::vector<Vector> random_points(std::size_t dim, std::size_t n, double range, std::uint64_t seed);

/// The shared corpus: 50 seeded nets (a few linear, a few with a ReLU
/// output layer) with 20 points each and a mix of property settings.
const std::vector<Fixture>& corpus();

/// Small nets for the completeness oracle: input dim 2-3, at most 20
/// neurons and at most 12 interval-unstable ReLUs at every point.
std::vector<Fixture> small_corpus(std::size_t nets, std::size_t points_per_net,
                                  std::uint64_t seed);

/// Random bounded LP with at most `max_vars` variables and `max_rows`
/// constraints. Some draws are infeasible.
stabkit::LinearProgram random_lp(std::uint64_t seed, std::size_t max_vars = 6,
                                 std::size_t max_rows = 10);

}  // namespace fixtures
