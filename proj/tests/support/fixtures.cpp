#include "fixtures.hpp"

#include "oracles.hpp"

#include <cmath>
#include <random>

namespace fixtures {

namespace {

std::vector<stabkit::DenseLayer> random_layers(const std::vector<std::size_t>& widths,
                                               std::mt19937_64& rng, double scale, bool last_relu,
                                               bool all_linear) {
  std::vector<stabkit::DenseLayer> layers;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i - 1]);
    const auto out = static_cast<Eigen::Index>(widths[i]);
    const double s = scale / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-s, s);
    stabkit::DenseLayer l;
    l.weights.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) l.weights(r, c) = u(rng);
    for (Eigen::Index r = 0; r < out; ++r) l.bias(r) = u(rng);
    const bool last = i + 1 == widths.size();
    l.activation = all_linear || (last && !last_relu) ? stabkit::Activation::Linear
                                                      : stabkit::Activation::ReLU;
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace

DenseNetwork random_net(const std::vector<std::size_t>& widths, std::uint64_t seed,
                        double weight_scale, bool last_relu) {
  std::mt19937_64 rng(seed);
  return DenseNetwork(widths.front(), random_layers(widths, rng, weight_scale, last_relu, false));
}

DenseNetwork random_linear_net(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return DenseNetwork(widths.front(), random_layers(widths, rng, 1.0, false, true));
}

std::vector<Vector> random_points(std::size_t dim, std::size_t n, double range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.1 * range, range);
  std::bernoulli_distribution neg(0.5);
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(static_cast<Eigen::Index>(dim));
    for (auto& v : x) v = neg(rng) ? -mag(rng) : mag(rng);
    pts.push_back(std::move(x));
  }
  return pts;
}

const std::vector<Fixture>& corpus() {
  static const std::vector<Fixture> all = [] {
    std::vector<Fixture> out;
    for (std::size_t i = 0; i < 50; ++i) {
      const std::uint64_t seed = 1000 + i;
      const std::size_t in = 2 + i % 5;
      const std::size_t hidden = 1 + i % 3;
      const std::size_t width = 4 + (i * 7) % 9;
      const std::size_t outputs = 1 + i % 4;
      std::vector<std::size_t> widths{in};
      for (std::size_t h = 0; h < hidden; ++h) widths.push_back(width);
      widths.push_back(outputs);
      const double scale = std::array<double, 3>{1.0, 2.0, 4.0}[(i / 3) % 3];

      stabkit::StabilityConfig prop;
      prop.p_inp = i % 2 == 0 ? 0.05 : 0.1;
      if (i % 7 == 3) prop.threshold = 2.0;
      if (i % 11 == 5) prop.per_index_overrides[0] = {std::nullopt, 0.5, 0.1};

      std::string name = "corpus_" + std::to_string(i);
      auto net = i % 10 == 0   ? random_linear_net(widths, seed)
                 : i % 10 == 1 ? random_net(widths, seed, scale, true)
                               : random_net(widths, seed, scale);
      out.push_back({std::move(name), std::move(net), random_points(in, 20, 10.0, seed * 31 + 7),
                     prop});
    }
    return out;
  }();
  return all;
}

std::vector<Fixture> small_corpus(std::size_t nets, std::size_t points_per_net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Fixture> out;
  while (out.size() < nets) {
    const std::size_t d = 2 + rng() % 2;
    const std::size_t h1 = 3 + rng() % 6;
    const std::size_t h2 = rng() % 2 ? 0 : 3 + rng() % 4;
    const std::size_t k = 1 + rng() % 3;
    std::vector<std::size_t> widths{d, h1};
    if (h2) widths.push_back(h2);
    widths.push_back(k);
    const double scale = 1.5 + static_cast<double>(rng() % 3);
    DenseNetwork net = random_net(widths, rng(), scale);

    stabkit::StabilityConfig prop;
    prop.p_inp = std::array<double, 3>{0.05, 0.1, 0.2}[rng() % 3];
    std::vector<Vector> pts;
    for (int tries = 0; pts.size() < points_per_net && tries < 200; ++tries) {
      Vector x = random_points(d, 1, 10.0, rng()).front();
      if (oracle::unstable_relus(net, oracle::relative_box(x, prop.p_inp)) <= 12)
        pts.push_back(std::move(x));
    }
    if (pts.size() < points_per_net) continue;
    out.push_back({"small_" + std::to_string(out.size()), std::move(net), std::move(pts), prop});
  }
  return out;
}

stabkit::LinearProgram random_lp(std::uint64_t seed, std::size_t max_vars, std::size_t max_rows) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool integral = rng() % 3 == 0;  // integer data makes degenerate vertices common
  auto coef = [&] { return integral ? static_cast<double>(static_cast<int>(rng() % 7) - 3) : u(rng); };

  stabkit::LinearProgram lp;
  const std::size_t n = 1 + rng() % max_vars;
  const std::size_t m = rng() % (max_rows + 1);
  Vector p(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = -5.0 * u01(rng);
    const double hi = lo + 0.5 + 4.5 * u01(rng);
    lp.add_variable(integral ? std::floor(lo) : lo, integral ? std::ceil(hi) : hi, coef());
    p(static_cast<Eigen::Index>(j)) = lo + u01(rng) * (hi - lo);
  }
  lp.sense = rng() % 2 ? stabkit::Sense::Maximize : stabkit::Sense::Minimize;
  for (std::size_t r = 0; r < m; ++r) {
    stabkit::LinearConstraint c;
    double ap = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (rng() % 10 < 3) continue;
      const double a = coef();
      if (a == 0.0) continue;
      c.terms.emplace_back(j, a);
      ap += a * p(static_cast<Eigen::Index>(j));
    }
    if (c.terms.empty()) c.terms.emplace_back(rng() % n, 1.0), ap = p(static_cast<Eigen::Index>(c.terms[0].first));
    const auto kind = rng() % 10;
    const bool toward_infeasible = rng() % 12 == 0;
    const double slack = integral ? static_cast<double>(rng() % 3) : 2.0 * u01(rng);
    if (kind < 5) {
      c.relation = stabkit::Relation::LessEqual;
      c.rhs = toward_infeasible ? ap - 3.0 - slack : ap + slack;
    } else if (kind < 8) {
      c.relation = stabkit::Relation::GreaterEqual;
      c.rhs = toward_infeasible ? ap + 3.0 + slack : ap - slack;
    } else {
      c.relation = stabkit::Relation::Equal;
      c.rhs = toward_infeasible ? ap + 3.0 : ap;
    }
    if (integral) c.rhs = std::round(c.rhs);
    lp.add_constraint(std::move(c));
  }
  return lp;
}

}  // namespace fixtures
