#pragma once

#include "stabkit/milp.hpp"
#include "stabkit/network.hpp"
#include "stabkit/property.hpp"

#include <filesystem>
#include <limits>
#include <optional>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

/// Which propagation seeds the MILP's neuron bounds.
enum class BoundSeed { Symbolic, Crown };

struct SolverConfig {
  double timeout_s = 300.0;
  double integrality_tol = 1e-6;
  double feasibility_tol = 1e-7;
  /// Encoded violations must exceed the deviation bound by this much.
  double violation_margin = 1e-5;
  BoundSeed initial_bounds = BoundSeed::Symbolic;
  /// Debug: write each encoded MILP here (LP-format-like text).
  std::optional<std::filesystem::path> dump_dir;
};

SolverConfig solver_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SolverConfig& cfg);

struct CompleteOutcome {
  Verdict verdict;
  std::size_t milp_calls = 0;
  std::size_t nodes = 0;
  std::size_t unstable_relus = 0;
};

/// Symbolic bounds first; the MILP is only built when they cannot
/// certify the point. Falsified witnesses are re-checked by a forward
/// pass with a 1e-6 margin.
CompleteOutcome complete_verify_detailed(const DenseNetwork& net, const Vector& x,
                                         const SolverConfig& cfg, const StabilityConfig& property,
                                         std::size_t point_id = 0);

Verdict complete_verify(const DenseNetwork& net, const Vector& x, const SolverConfig& cfg,
                        const StabilityConfig& property);

}  // namespace stabkit
