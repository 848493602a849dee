#pragma once

#include "stabkit/network.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

/// Per-output replacement for the bow-tie constants.
struct IndexOverride {
  std::optional<double> threshold;
  std::optional<double> knot_half_width;
  std::optional<double> p_out;
};

/// Bow-tie local stability parameters. Defaults are the aircraft
/// loads-to-stress settings (T = 10, c_T = 1, 5% in and out).
struct StabilityConfig {
  double threshold = 10.0;       // T
  double knot_half_width = 1.0;  // c_T
  double p_inp = 0.05;
  double p_out = 0.05;
  /// Minimum box half-width per input dimension. 0 keeps the exact
  /// relative box, so zero coordinates are not perturbed.
  double abs_floor = 0.0;
  /// Keyed by output index.
  std::map<std::size_t, IndexOverride> per_index_overrides;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

StabilityConfig stability_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StabilityConfig& cfg);

/// Closed box of admissible perturbed inputs x'.
struct PerturbationBox {
  Vector lower;
  Vector upper;

  std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
  Vector center() const { return 0.5 * (lower + upper); }
  Vector radius() const { return 0.5 * (upper - lower); }
  bool contains(const Vector& x) const;
  bool degenerate() const { return (upper - lower).maxCoeff() <= 0.0; }
};

/// [x - p|x|, x + p|x|], widened to at least `abs_floor` per side.
PerturbationBox build_box(const Vector& x, double p_inp, double abs_floor = 0.0);

enum class Zone { Knot, Wing };

/// Allowed deviation f_i(x') - f_i(x) per output.
struct DeltaBounds {
  Vector lower;  // <= 0
  Vector upper;  // >= 0
  std::vector<Zone> zones;

  std::size_t size() const { return zones.size(); }
};

DeltaBounds compute_deltas(const Vector& f_x, const StabilityConfig& cfg);

struct Violation {
  std::size_t index;
  double deviation;  // f_i(x') - f_i(x)
};

/// First output whose deviation leaves the closed interval
/// [delta.lower_i, delta.upper_i], or nothing.
std::optional<Violation> check_violation(const Vector& f_x, const Vector& f_xp,
                                         const DeltaBounds& deltas);

/// Largest amount by which any output leaves its interval (<= 0 when compliant).
double violation_excess(const Vector& f_x, const Vector& f_xp, const DeltaBounds& deltas);

enum class Status { Verified, Falsified, Unknown };

std::string_view to_string(Status s);

struct Witness {
  Vector x_prime;
  std::size_t index = 0;
  double deviation = 0.0;
};

struct Verdict {
  Status status = Status::Unknown;
  std::optional<Witness> witness;  // present iff Falsified
  std::string decided_by;
  double elapsed_s = 0.0;
  std::string diagnostic;  // reason for Unknown (timeout, error, ...)

  static Verdict verified(std::string brick) {
    return {Status::Verified, std::nullopt, std::move(brick), 0.0, {}};
  }
  static Verdict falsified(std::string brick, Witness w) {
    return {Status::Falsified, std::move(w), std::move(brick), 0.0, {}};
  }
  static Verdict unknown(std::string brick, std::string why = {}) {
    return {Status::Unknown, std::nullopt, std::move(brick), 0.0, std::move(why)};
  }
};

/// Re-evaluates a candidate witness with an exact forward pass. Returns the
/// validated witness when x' lies in the box and violates the property by
/// more than `margin`.
std::optional<Witness> validate_witness(const DenseNetwork& net, const Vector& f_x,
                                        const PerturbationBox& box, const DeltaBounds& deltas,
                                        const Vector& x_prime, double margin = 0.0);

}  // namespace stabkit
