#pragma once

#include "stabkit/network.hpp"
#include "stabkit/property.hpp"

#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

/// Concrete bounds of one layer's neurons, before and after the activation.
struct NeuronBounds {
  Vector pre_lower, pre_upper;
  Vector post_lower, post_upper;
};

/// One entry per network layer, in order.
struct LayerBounds {
  std::vector<NeuronBounds> layers;

  const NeuronBounds& output() const { return layers.back(); }
  bool empty() const { return layers.empty(); }
};

/// Affine lower/upper bounding functions of the outputs in terms of x'.
/// Row i of each matrix bounds output i.
struct LinearRelaxation {
  Matrix lower_coeffs;
  Vector lower_const;
  Matrix upper_coeffs;
  Vector upper_const;

  /// Concretization over a box: min of the lower function, max of the upper.
  std::pair<Vector, Vector> concretize(const PerturbationBox& box) const;
};

enum class BoundMethod { Interval, Symbolic, Crown, Best };

std::string_view to_string(BoundMethod m);
BoundMethod bound_method_from_string(std::string_view s);

LayerBounds interval_propagate(const DenseNetwork& net, const PerturbationBox& box);

struct SymbolicResult {
  LayerBounds bounds;
  LinearRelaxation relaxation;
};

/// Forward propagation of one lower and one upper affine form per neuron.
/// Concrete bounds are intersected layer by layer with the interval step
/// from the previous (already tightened) layer.
SymbolicResult symbolic_propagate(const DenseNetwork& net, const PerturbationBox& box);

/// Backward linear relaxation of the network outputs. `layer_bounds`
/// classifies each ReLU as stable or unstable.
LinearRelaxation crown_backward(const DenseNetwork& net, const PerturbationBox& box,
                                const LayerBounds& layer_bounds);

/// Full CROWN: every ReLU layer's pre-activation bounds are recomputed by a
/// backward pass and intersected with `seed`.
LayerBounds crown_propagate(const DenseNetwork& net, const PerturbationBox& box,
                            const LayerBounds& seed);

/// Concrete output bounds [L, U] for the chosen method.
std::pair<Vector, Vector> output_bounds(const DenseNetwork& net, const PerturbationBox& box,
                                        BoundMethod method);

struct CertifyResult {
  Verdict verdict;
  Vector lower, upper;  // output bounds used for the decision
};

/// Verified iff every output's bounds lie inside f(x) + deltas (closed);
/// otherwise Unknown. Never Falsified.
CertifyResult certify_detailed(const DenseNetwork& net, const Vector& x, const PerturbationBox& box,
                               const DeltaBounds& deltas, BoundMethod method);

Verdict certify(const DenseNetwork& net, const Vector& x, const PerturbationBox& box,
                const DeltaBounds& deltas, BoundMethod method);

/// True iff [lower, upper] fits within f_x + deltas for every output.
bool bounds_fit(const Vector& f_x, const DeltaBounds& deltas, const Vector& lower,
                const Vector& upper);

nlohmann::json to_json(const LayerBounds& b);

}  // namespace stabkit
