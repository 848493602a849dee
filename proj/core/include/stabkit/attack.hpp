#pragma once

#include "stabkit/network.hpp"
#include "stabkit/property.hpp"

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

enum class AttackMethod { FGSM, PGD };
enum class IndexOrder { Natural, BySuccess };

struct AttackConfig {
  AttackMethod method = AttackMethod::PGD;
  int steps = 20;
  /// Per-iteration step, expressed in the same relative units as p_inp:
  /// one step moves coordinate j by step_size / p_inp of its box half-width
  /// (step_size * |x_j| on an unfloored box).
  double step_size = 0.01;
  int restarts = 0;
  IndexOrder index_order = IndexOrder::Natural;
  /// Explicit permutation of output indexes; overrides index_order when set.
  std::vector<std::size_t> explicit_order;
  bool early_stop = true;
  std::uint64_t seed = 0;

  void validate() const;
};

AttackConfig attack_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttackConfig& cfg);

/// Everything an attack needs about one test point.
struct AttackTarget {
  const DenseNetwork& net;
  const Vector& x;
  const Vector& f_x;
  const PerturbationBox& box;
  const DeltaBounds& deltas;
  double p_inp;
};

struct AttackAttempt {
  std::size_t index;
  Direction direction;
  bool success;
  /// Largest directed deviation direction * (f_i(x') - f_i(x)) reached.
  double best_deviation;
};

struct AttackOutcome {
  Verdict verdict;
  std::vector<AttackAttempt> attempts;
  std::size_t evaluations = 0;  // forward+gradient passes
};

/// Signed-gradient ascent on direction * f_i inside the box. Every iterate
/// is clamped to the box; the run ends after cfg.steps moves or once the
/// iterate stops moving. Returns the most violating iterate, validated by an
/// exact forward pass, or nothing. `evaluations` (optional) is incremented
/// per gradient.
std::optional<Witness> attack_index(const AttackTarget& target, std::size_t index,
                                    Direction direction, const AttackConfig& cfg,
                                    AttackAttempt* attempt = nullptr,
                                    std::size_t* evaluations = nullptr);

/// Attacks every output index in both directions. Never returns Verified.
AttackOutcome attack_point_detailed(const DenseNetwork& net, const Vector& x,
                                    const AttackConfig& cfg, const StabilityConfig& property);

Verdict attack_point(const DenseNetwork& net, const Vector& x, const AttackConfig& cfg,
                     const StabilityConfig& property);

}  // namespace stabkit
