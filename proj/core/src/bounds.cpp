#include "stabkit/bounds.hpp"

#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>

namespace stabkit {

namespace {

struct ReluRelaxation {
  Vector upper_slope, upper_intercept, lower_slope;
};

// Chord upper bound and {0,1} lower slope (1 when u >= |l|) per neuron.
ReluRelaxation relax_relu(const Vector& l, const Vector& u) {
  const auto n = l.size();
  ReluRelaxation r{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    if (u(j) <= 0.0) continue;
    if (l(j) >= 0.0) {
      r.upper_slope(j) = 1.0;
      r.lower_slope(j) = 1.0;
      continue;
    }
    const double s = u(j) / (u(j) - l(j));
    r.upper_slope(j) = s;
    r.upper_intercept(j) = -s * l(j);
    r.lower_slope(j) = u(j) >= -l(j) ? 1.0 : 0.0;
  }
  return r;
}

// Intersections of sound bounds can cross by a rounding error when the true
// range is (nearly) a point. Crossed neurons fall back to `fallback`, which
// is itself sound.
void uncross(Vector& lo, Vector& hi, const NeuronBounds& fallback) {
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    if (lo(j) > hi(j)) {
      lo(j) = fallback.pre_lower(j);
      hi(j) = fallback.pre_upper(j);
    }
  }
}

NeuronBounds with_activation(Vector pre_lower, Vector pre_upper, Activation act) {
  // Intersections of sound bounds can cross by a rounding error when the
  // true range is (nearly) a point; keep the hull of both ends then.
  for (Eigen::Index j = 0; j < pre_lower.size(); ++j)
    if (pre_lower(j) > pre_upper(j)) std::swap(pre_lower(j), pre_upper(j));
  NeuronBounds b;
  b.pre_lower = std::move(pre_lower);
  b.pre_upper = std::move(pre_upper);
  if (act == Activation::ReLU) {
    b.post_lower = b.pre_lower.cwiseMax(0.0);
    b.post_upper = b.pre_upper.cwiseMax(0.0);
  } else {
    b.post_lower = b.pre_lower;
    b.post_upper = b.pre_upper;
  }
  return b;
}

// Interval image of [l, u] under x -> W x + b.
std::pair<Vector, Vector> affine_interval(const DenseLayer& layer, const Vector& l,
                                          const Vector& u) {
  const Vector c = 0.5 * (l + u);
  const Vector r = 0.5 * (u - l);
  const Vector mid = layer.weights * c + layer.bias;
  const Vector rad = layer.weights.cwiseAbs() * r;
  return {mid - rad, mid + rad};
}

const Vector& post_lower_of(const LayerBounds& b, const PerturbationBox& box, std::size_t i) {
  return i == 0 ? box.lower : b.layers[i - 1].post_lower;
}
const Vector& post_upper_of(const LayerBounds& b, const PerturbationBox& box, std::size_t i) {
  return i == 0 ? box.upper : b.layers[i - 1].post_upper;
}

// Backward linear bounds on the pre-activation of layer `last` (or on its
// post-activation when `through_activation`), as affine forms in x.
LinearRelaxation backward(const DenseNetwork& net, const LayerBounds& bounds, std::size_t last,
                          bool through_activation) {
  const auto& layers = net.layers();
  const auto width = static_cast<Eigen::Index>(layers[last].out_dim());
  Matrix lam_u = Matrix::Identity(width, width);
  Matrix lam_l = lam_u;
  Vector c_u = Vector::Zero(width);
  Vector c_l = Vector::Zero(width);

  auto apply_relu = [&](std::size_t i) {
    const auto r = relax_relu(bounds.layers[i].pre_lower, bounds.layers[i].pre_upper);
    const Matrix up_pos = lam_u.cwiseMax(0.0);
    const Matrix up_neg = lam_u.cwiseMin(0.0);
    c_u += up_pos * r.upper_intercept;
    lam_u = up_pos * r.upper_slope.asDiagonal();
    lam_u += up_neg * r.lower_slope.asDiagonal();

    const Matrix lo_pos = lam_l.cwiseMax(0.0);
    const Matrix lo_neg = lam_l.cwiseMin(0.0);
    c_l += lo_neg * r.upper_intercept;
    lam_l = lo_pos * r.lower_slope.asDiagonal();
    lam_l += lo_neg * r.upper_slope.asDiagonal();
  };

  for (std::size_t i = last + 1; i-- > 0;) {
    const auto& layer = layers[i];
    if (layer.activation == Activation::ReLU && (i != last || through_activation)) apply_relu(i);
    c_u += lam_u * layer.bias;
    c_l += lam_l * layer.bias;
    lam_u = lam_u * layer.weights;
    lam_l = lam_l * layer.weights;
  }
  return {std::move(lam_l), std::move(c_l), std::move(lam_u), std::move(c_u)};
}

}  // namespace

std::pair<Vector, Vector> LinearRelaxation::concretize(const PerturbationBox& box) const {
  const Vector c = box.center();
  const Vector r = box.radius();
  Vector lo = lower_coeffs * c - lower_coeffs.cwiseAbs() * r + lower_const;
  Vector hi = upper_coeffs * c + upper_coeffs.cwiseAbs() * r + upper_const;
  return {std::move(lo), std::move(hi)};
}

std::string_view to_string(BoundMethod m) {
  switch (m) {
    case BoundMethod::Interval:
      return "interval";
    case BoundMethod::Symbolic:
      return "symbolic";
    case BoundMethod::Crown:
      return "crown";
    case BoundMethod::Best:
      break;
  }
  return "best";
}

BoundMethod bound_method_from_string(std::string_view s) {
  if (s == "interval") return BoundMethod::Interval;
  if (s == "symbolic") return BoundMethod::Symbolic;
  if (s == "crown") return BoundMethod::Crown;
  if (s == "best") return BoundMethod::Best;
  throw ParseError("bound method: expected best|crown|symbolic|interval, got \"" +
                   std::string(s) + "\"");
}

LayerBounds interval_propagate(const DenseNetwork& net, const PerturbationBox& box) {
  LayerBounds out;
  Vector l = box.lower, u = box.upper;
  for (const auto& layer : net.layers()) {
    auto [pl, pu] = affine_interval(layer, l, u);
    out.layers.push_back(with_activation(std::move(pl), std::move(pu), layer.activation));
    l = out.layers.back().post_lower;
    u = out.layers.back().post_upper;
  }
  return out;
}

SymbolicResult symbolic_propagate(const DenseNetwork& net, const PerturbationBox& box) {
  const auto n = static_cast<Eigen::Index>(net.input_dim());
  const Vector c = box.center();
  const Vector r = box.radius();

  Matrix lo = Matrix::Identity(n, n), hi = lo;
  Vector lo_c = Vector::Zero(n), hi_c = Vector::Zero(n);

  // Also intersected with plain interval bounds so that symbolic widths
  // never exceed interval widths, even after rounding.
  const LayerBounds plain = interval_propagate(net, box);

  SymbolicResult out;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto& layer = net.layer(i);
    const Matrix w_pos = layer.weights.cwiseMax(0.0);
    const Matrix w_neg = layer.weights.cwiseMin(0.0);
    Matrix new_lo = w_pos * lo + w_neg * hi;
    Matrix new_hi = w_pos * hi + w_neg * lo;
    Vector new_lo_c = w_pos * lo_c + w_neg * hi_c + layer.bias;
    Vector new_hi_c = w_pos * hi_c + w_neg * lo_c + layer.bias;

    // Concretize and intersect with the interval step.
    Vector sym_l = new_lo * c - new_lo.cwiseAbs() * r + new_lo_c;
    Vector sym_u = new_hi * c + new_hi.cwiseAbs() * r + new_hi_c;
    auto [int_l, int_u] = affine_interval(layer, post_lower_of(out.bounds, box, i),
                                          post_upper_of(out.bounds, box, i));
    Vector pre_l = sym_l.cwiseMax(int_l).cwiseMax(plain.layers[i].pre_lower);
    Vector pre_u = sym_u.cwiseMin(int_u).cwiseMin(plain.layers[i].pre_upper);
    uncross(pre_l, pre_u, plain.layers[i]);

    if (layer.activation == Activation::ReLU) {
      for (Eigen::Index j = 0; j < pre_l.size(); ++j) {
        if (pre_u(j) <= 0.0) {
          new_lo.row(j).setZero();
          new_hi.row(j).setZero();
          new_lo_c(j) = 0.0;
          new_hi_c(j) = 0.0;
        } else if (pre_l(j) < 0.0) {
          // Upper form: chord over the form's own range.
          const double hl =
              new_hi.row(j).dot(c) - new_hi.row(j).cwiseAbs().dot(r) + new_hi_c(j);
          const double hu = sym_u(j);
          if (hl < 0.0) {
            const double s = hu / (hu - hl);
            new_hi.row(j) *= s;
            new_hi_c(j) = s * (new_hi_c(j) - hl);
          }
          if (pre_u(j) < -pre_l(j)) {
            new_lo.row(j).setZero();
            new_lo_c(j) = 0.0;
          }
        }
      }
    }
    out.bounds.layers.push_back(with_activation(std::move(pre_l), std::move(pre_u), layer.activation));
    lo = std::move(new_lo);
    hi = std::move(new_hi);
    lo_c = std::move(new_lo_c);
    hi_c = std::move(new_hi_c);
  }
  out.relaxation = {std::move(lo), std::move(lo_c), std::move(hi), std::move(hi_c)};
  return out;
}

LinearRelaxation crown_backward(const DenseNetwork& net, const PerturbationBox& /*box*/,
                                const LayerBounds& layer_bounds) {
  if (layer_bounds.layers.size() != net.num_layers())
    throw DimensionError("crown_backward: layer bounds do not match the network");
  return backward(net, layer_bounds, net.num_layers() - 1, true);
}

LayerBounds crown_propagate(const DenseNetwork& net, const PerturbationBox& box,
                            const LayerBounds& seed) {
  if (seed.layers.size() != net.num_layers())
    throw DimensionError("crown_propagate: seed bounds do not match the network");
  LayerBounds out = seed;
  for (std::size_t m = 0; m < net.num_layers(); ++m) {
    const auto rel = backward(net, out, m, false);
    auto [l, u] = rel.concretize(box);
    const auto& s = seed.layers[m];
    Vector lo = l.cwiseMax(s.pre_lower), hi = u.cwiseMin(s.pre_upper);
    uncross(lo, hi, s);
    out.layers[m] = with_activation(std::move(lo), std::move(hi), net.layer(m).activation);
  }
  return out;
}

std::pair<Vector, Vector> output_bounds(const DenseNetwork& net, const PerturbationBox& box,
                                        BoundMethod method) {
  switch (method) {
    case BoundMethod::Interval: {
      const auto b = interval_propagate(net, box);
      return {b.output().post_lower, b.output().post_upper};
    }
    case BoundMethod::Symbolic: {
      const auto s = symbolic_propagate(net, box);
      return {s.bounds.output().post_lower, s.bounds.output().post_upper};
    }
    case BoundMethod::Crown: {
      const auto b = crown_propagate(net, box, interval_propagate(net, box));
      return {b.output().post_lower, b.output().post_upper};
    }
    case BoundMethod::Best:
      break;
  }
  const auto ib = interval_propagate(net, box);
  const auto s = symbolic_propagate(net, box);
  const auto crown_int = crown_propagate(net, box, ib);
  const auto crown_sym = crown_propagate(net, box, s.bounds);
  Vector lo = ib.output().post_lower.cwiseMax(s.bounds.output().post_lower)
                  .cwiseMax(crown_int.output().post_lower)
                  .cwiseMax(crown_sym.output().post_lower);
  Vector hi = ib.output().post_upper.cwiseMin(s.bounds.output().post_upper)
                  .cwiseMin(crown_int.output().post_upper)
                  .cwiseMin(crown_sym.output().post_upper);
  for (Eigen::Index j = 0; j < lo.size(); ++j)
    if (lo(j) > hi(j)) lo(j) = hi(j) = 0.5 * (lo(j) + hi(j));  // crossed by rounding
  return {std::move(lo), std::move(hi)};
}

bool bounds_fit(const Vector& f_x, const DeltaBounds& deltas, const Vector& lower,
                const Vector& upper) {
  return ((f_x + deltas.lower).array() <= lower.array()).all() &&
         (upper.array() <= (f_x + deltas.upper).array()).all();
}

CertifyResult certify_detailed(const DenseNetwork& net, const Vector& x,
                               const PerturbationBox& box, const DeltaBounds& deltas,
                               BoundMethod method) {
  const Vector f_x = net.forward(x);
  auto [lo, hi] = output_bounds(net, box, method);
  const std::string label = "bounds";
  CertifyResult out{bounds_fit(f_x, deltas, lo, hi)
                        ? Verdict::verified(label)
                        : Verdict::unknown(label, "output bounds exceed the allowed deviation"),
                    std::move(lo), std::move(hi)};
  return out;
}

Verdict certify(const DenseNetwork& net, const Vector& x, const PerturbationBox& box,
                const DeltaBounds& deltas, BoundMethod method) {
  return certify_detailed(net, x, box, deltas, method).verdict;
}

nlohmann::json to_json(const LayerBounds& b) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& nb : b.layers) {
    layers.push_back({{"pre_lower", vec(nb.pre_lower)},
                      {"pre_upper", vec(nb.pre_upper)},
                      {"post_lower", vec(nb.post_lower)},
                      {"post_upper", vec(nb.post_upper)}});
  }
  return layers;
}

}  // namespace stabkit
