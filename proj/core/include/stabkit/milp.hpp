#pragma once

#include "stabkit/bounds.hpp"
#include "stabkit/lp.hpp"
#include "stabkit/property.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

enum class BinaryRole { ReluPhase, IndicatorBelow, IndicatorAbove };

struct BinaryVar {
  std::size_t var;
  BinaryRole role;
  /// Larger is branched first.
  double priority;
};

/// Variable ids of one encoded layer; `phase[j]` is -1 for stable neurons.
struct EncodedLayer {
  std::vector<std::size_t> pre;   // y_{i,j,-}
  std::vector<std::size_t> post;  // y_{i,j,+}
  std::vector<long> phase;
};

/// MILP over a LinearProgram: a set of binary variables plus the
/// bookkeeping that maps network quantities to variable ids.
struct MilpModel {
  LinearProgram lp;
  std::vector<BinaryVar> binaries;
  std::vector<std::size_t> inputs;
  std::vector<EncodedLayer> layers;
  std::vector<std::size_t> indicator_below;  // indic_{-,j}
  std::vector<std::size_t> indicator_above;  // indic_{+,j}

  /// Optional primal heuristic: maps an LP relaxation solution to a fully
  /// feasible assignment. Candidates are checked before acceptance.
  std::function<std::optional<Vector>(const Vector&)> repair;

  const std::vector<std::size_t>& outputs() const { return layers.back().post; }
  std::size_t num_phase_binaries() const;
};

/// Big-M encoding of the network over the box. Pre-activation bounds in
/// `layer_bounds` give per-neuron M values and stabilize neurons.
MilpModel encode_network(const DenseNetwork& net, const PerturbationBox& box,
                         const LayerBounds& layer_bounds);

/// Adds indic_{-,j}, indic_{+,j} for every output and the covering row
/// sum_j (indic_{+,j} + indic_{-,j}) >= 1. A violation must exceed the
/// deviation bound by `margin`. Also installs a forward-pass repair
/// heuristic when `net` is given.
MilpModel encode_negated_property(MilpModel model, const Vector& f_x, const DeltaBounds& deltas,
                                  double margin = 1e-5, const DenseNetwork* net = nullptr);

struct MilpOptions {
  double timeout_s = std::numeric_limits<double>::infinity();
  double integrality_tol = 1e-6;
  double feasibility_tol = 1e-7;
  /// Stop at the first integer-feasible point (feasibility problems).
  bool first_feasible = true;
  /// Best-first node selection every this many nodes; depth-first otherwise.
  std::size_t restart_period = 256;
  /// Optional per-node observer: (depth, parent bound, node bound).
  std::function<void(std::size_t, double, double)> on_node;
};

struct MilpResult {
  SolveStatus status;
  std::size_t nodes = 0;
  std::size_t lp_iterations = 0;
};

MilpResult milp_solve(const MilpModel& model, const MilpOptions& opts = {});

}  // namespace stabkit
