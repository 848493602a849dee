#include "oracles.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

namespace {

// Calls fn(indices) for every k-subset of {0..n-1}.
template <class Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn&& fn) {
  if (k > n) return;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    fn(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

struct Hyperplane {
  Vector a;
  double b;  // a . x = b
};

// Vertices of {x : a_r . x >= b_r for all r, lo <= x <= hi}.
template <class Fn>
void for_each_vertex(const std::vector<Hyperplane>& ineq_ge, const Vector& lo, const Vector& hi,
                     Fn&& fn) {
  const auto d = lo.size();
  std::vector<Hyperplane> planes = ineq_ge;
  for (Eigen::Index k = 0; k < d; ++k) {
    Vector e = Vector::Zero(d);
    e(k) = 1.0;
    planes.push_back({e, lo(k)});
    if (hi(k) > lo(k)) planes.push_back({e, hi(k)});
  }
  Matrix a(d, d);
  Vector b(d);
  for_each_subset(planes.size(), static_cast<std::size_t>(d), [&](const std::vector<std::size_t>& s) {
    for (Eigen::Index r = 0; r < d; ++r) {
      a.row(r) = planes[s[static_cast<std::size_t>(r)]].a.transpose();
      b(r) = planes[s[static_cast<std::size_t>(r)]].b;
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible()) return;
    const Vector v = lu.solve(b);
    for (Eigen::Index k = 0; k < d; ++k)
      if (v(k) < lo(k) - 1e-9 * (1.0 + std::abs(lo(k))) || v(k) > hi(k) + 1e-9 * (1.0 + std::abs(hi(k))))
        return;
    for (const auto& h : ineq_ge)
      if (h.a.dot(v) - h.b < -1e-9 * (1.0 + h.a.cwiseAbs().dot(v.cwiseAbs()) + std::abs(h.b))) return;
    fn(Vector(v.cwiseMax(lo).cwiseMin(hi)));
  });
}

}  // namespace

std::optional<double> lp_vertex_optimum(const stabkit::LinearProgram& lp, double tol) {
  const std::size_t n = lp.num_variables();
  std::vector<Hyperplane> planes;
  struct Row {
    Vector a;
    double rhs;
    stabkit::Relation rel;
  };
  std::vector<Row> rows;
  for (const auto& c : lp.constraints()) {
    Vector a = Vector::Zero(static_cast<Eigen::Index>(n));
    for (const auto& [var, coef] : c.terms) a(static_cast<Eigen::Index>(var)) += coef;
    rows.push_back({a, c.rhs, c.relation});
    planes.push_back({a, c.rhs});
  }
  for (std::size_t j = 0; j < n; ++j) {
    Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
    e(static_cast<Eigen::Index>(j)) = 1.0;
    planes.push_back({e, lp.lower()[j]});
    planes.push_back({e, lp.upper()[j]});
  }
  const Vector obj = Eigen::Map<const Vector>(lp.objective().data(), static_cast<Eigen::Index>(n));
  const bool maximize = lp.sense == stabkit::Sense::Maximize;

  std::optional<double> best;
  Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Vector b(static_cast<Eigen::Index>(n));
  for_each_subset(planes.size(), n, [&](const std::vector<std::size_t>& s) {
    for (std::size_t r = 0; r < n; ++r) {
      a.row(static_cast<Eigen::Index>(r)) = planes[s[r]].a.transpose();
      b(static_cast<Eigen::Index>(r)) = planes[s[r]].b;
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible()) return;
    const Vector v = lu.solve(b);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = v(static_cast<Eigen::Index>(j));
      if (x < lp.lower()[j] - tol * (1 + std::abs(lp.lower()[j])) ||
          x > lp.upper()[j] + tol * (1 + std::abs(lp.upper()[j])))
        return;
    }
    for (const auto& row : rows) {
      const double lhs = row.a.dot(v);
      const double t = tol * (1.0 + row.a.cwiseAbs().dot(v.cwiseAbs()) + std::abs(row.rhs));
      switch (row.rel) {
        case stabkit::Relation::LessEqual:
          if (lhs > row.rhs + t) return;
          break;
        case stabkit::Relation::GreaterEqual:
          if (lhs < row.rhs - t) return;
          break;
        case stabkit::Relation::Equal:
          if (std::abs(lhs - row.rhs) > t) return;
          break;
      }
    }
    const double val = obj.dot(v);
    if (!best || (maximize ? val > *best : val < *best)) best = val;
  });
  return best;
}

Box relative_box(const Vector& x, double p) {
  const Vector r = p * x.cwiseAbs();
  return {x - r, x + r};
}

std::vector<std::pair<Vector, Vector>> interval_pre_bounds(const DenseNetwork& net, const Box& box) {
  std::vector<std::pair<Vector, Vector>> out;
  Vector lo = box.lower, hi = box.upper;
  for (const auto& layer : net.layers()) {
    Vector nlo = layer.bias, nhi = layer.bias;
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        const double w = layer.weights(r, c);
        nlo(r) += w >= 0 ? w * lo(c) : w * hi(c);
        nhi(r) += w >= 0 ? w * hi(c) : w * lo(c);
      }
    }
    out.emplace_back(nlo, nhi);
    if (layer.activation == stabkit::Activation::ReLU) {
      nlo = nlo.cwiseMax(0.0);
      nhi = nhi.cwiseMax(0.0);
    }
    lo = nlo;
    hi = nhi;
  }
  return out;
}

std::size_t unstable_relus(const DenseNetwork& net, const Box& box) {
  const auto pre = interval_pre_bounds(net, box);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (net.layer(i).activation != stabkit::Activation::ReLU) continue;
    for (Eigen::Index j = 0; j < pre[i].first.size(); ++j)
      if (pre[i].first(j) < 0.0 && pre[i].second(j) > 0.0) ++n;
  }
  return n;
}

std::pair<double, double> allowed_deviation(double f, const stabkit::StabilityConfig& cfg,
                                            std::size_t index) {
  double t = cfg.threshold, c = cfg.knot_half_width, p = cfg.p_out;
  if (auto it = cfg.per_index_overrides.find(index); it != cfg.per_index_overrides.end()) {
    if (it->second.threshold) t = *it->second.threshold;
    if (it->second.knot_half_width) c = *it->second.knot_half_width;
    if (it->second.p_out) p = *it->second.p_out;
  }
  if (std::abs(f) <= t) return {-c, c};
  return {-p * std::abs(f), p * std::abs(f)};
}

PhaseResult phase_enumeration(const DenseNetwork& net, const Vector& x,
                              const stabkit::StabilityConfig& cfg) {
  const Box box = relative_box(x, cfg.p_inp);
  const auto pre = interval_pre_bounds(net, box);
  const Vector f_x = net.forward(x);
  const auto d = x.size();

  struct Unstable {
    std::size_t layer;
    Eigen::Index neuron;
  };
  std::vector<Unstable> unstable;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (net.layer(i).activation != stabkit::Activation::ReLU) continue;
    for (Eigen::Index j = 0; j < pre[i].first.size(); ++j)
      if (pre[i].first(j) < 0.0 && pre[i].second(j) > 0.0) unstable.push_back({i, j});
  }

  std::vector<std::pair<double, double>> allowed;
  for (Eigen::Index i = 0; i < f_x.size(); ++i)
    allowed.push_back(allowed_deviation(f_x(i), cfg, static_cast<std::size_t>(i)));

  PhaseResult res;
  const std::size_t patterns = std::size_t{1} << unstable.size();
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    std::vector<Hyperplane> ge;  // a . x >= b
    Matrix a = Matrix::Identity(d, d);
    Vector c = Vector::Zero(d);
    std::size_t u = 0;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
      const auto& layer = net.layer(i);
      Matrix za = layer.weights * a;
      Vector zc = layer.weights * c + layer.bias;
      if (layer.activation == stabkit::Activation::ReLU) {
        for (Eigen::Index j = 0; j < za.rows(); ++j) {
          const double lo = pre[i].first(j), hi = pre[i].second(j);
          bool active;
          if (lo >= 0.0) {
            active = true;
          } else if (hi <= 0.0) {
            active = false;
          } else {
            active = (mask >> u++) & 1U;
            if (active) {
              ge.push_back({za.row(j).transpose(), -zc(j)});
            } else {
              ge.push_back({-za.row(j).transpose(), zc(j)});
            }
          }
          if (!active) {
            za.row(j).setZero();
            zc(j) = 0.0;
          }
        }
      }
      a = std::move(za);
      c = std::move(zc);
    }
    ++res.patterns;
    for_each_vertex(ge, box.lower, box.upper, [&](const Vector& v) {
      const Vector fv = net.forward(v);
      for (Eigen::Index i = 0; i < fv.size(); ++i) {
        const double dev = fv(i) - f_x(i);
        const auto [lo, hi] = allowed[static_cast<std::size_t>(i)];
        const double excess = std::max(lo - dev, dev - hi);
        if (excess > res.max_excess) {
          res.max_excess = excess;
          res.argmax = v;
        }
      }
    });
  }
  res.falsified = res.max_excess > 0.0;
  return res;
}

std::pair<Vector, Vector> monte_carlo_range(const DenseNetwork& net, const Box& box,
                                            std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto d = box.lower.size();
  const auto k = static_cast<Eigen::Index>(net.output_dim());
  Vector lo = Vector::Constant(k, std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(k, -std::numeric_limits<double>::infinity());
  constexpr std::size_t kChunk = 8192;
  Matrix xs;
  for (std::size_t done = 0; done < samples; done += kChunk) {
    const auto n = static_cast<Eigen::Index>(std::min(kChunk, samples - done));
    xs.resize(d, n);
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < d; ++r)
        xs(r, c) = box.lower(r) + u(rng) * (box.upper(r) - box.lower(r));
    const Matrix ys = net.forward_batch(xs);
    lo = lo.cwiseMin(ys.rowwise().minCoeff());
    hi = hi.cwiseMax(ys.rowwise().maxCoeff());
  }
  return {lo, hi};
}

Vector finite_difference_gradient(const DenseNetwork& net, const Vector& x, std::size_t index,
                                  double sign, double h) {
  Vector g(x.size());
  const auto i = static_cast<Eigen::Index>(index);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    g(j) = sign * (net.forward(xp)(i) - net.forward(xm)(i)) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
