#include "stabkit/property.hpp"

#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace stabkit {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("property: " + what);
}

}  // namespace

void StabilityConfig::validate() const {
  require(std::isfinite(threshold) && threshold >= 0.0, "T must be >= 0");
  require(std::isfinite(knot_half_width) && knot_half_width > 0.0, "c_T must be > 0");
  require(p_inp >= 0.0 && p_inp < 1.0, "p_inp must lie in [0, 1)");
  require(p_out >= 0.0 && p_out < 1.0, "p_out must lie in [0, 1)");
  require(std::isfinite(abs_floor) && abs_floor >= 0.0, "abs_floor must be >= 0");
  for (const auto& [idx, o] : per_index_overrides) {
    const std::string where = "per_index_overrides[" + std::to_string(idx) + "]";
    if (o.threshold) require(*o.threshold >= 0.0, where + ".T must be >= 0");
    if (o.knot_half_width) require(*o.knot_half_width > 0.0, where + ".c_T must be > 0");
    if (o.p_out) require(*o.p_out >= 0.0 && *o.p_out < 1.0, where + ".p_out must lie in [0, 1)");
  }
}

StabilityConfig stability_config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("property: expected a JSON object");
  StabilityConfig cfg;
  auto num = [&](const char* key, double& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ParseError(std::string("property.") + key + ": expected a number");
    dst = j[key].get<double>();
  };
  num("T", cfg.threshold);
  num("c_T", cfg.knot_half_width);
  num("p_inp", cfg.p_inp);
  num("p_out", cfg.p_out);
  num("abs_floor", cfg.abs_floor);
  if (j.contains("per_index_overrides")) {
    const auto& o = j["per_index_overrides"];
    if (!o.is_object()) throw ParseError("property.per_index_overrides: expected an object");
    for (const auto& [key, val] : o.items()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ParseError("property.per_index_overrides: key \"" + key +
                         "\" is not an output index");
      }
      IndexOverride ov;
      auto opt = [&](const char* k, std::optional<double>& dst) {
        if (!val.contains(k)) return;
        if (!val[k].is_number())
          throw ParseError("property.per_index_overrides." + key + "." + k + ": expected a number");
        dst = val[k].get<double>();
      };
      opt("T", ov.threshold);
      opt("c_T", ov.knot_half_width);
      opt("p_out", ov.p_out);
      cfg.per_index_overrides[idx] = ov;
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const StabilityConfig& cfg) {
  json overrides = json::object();
  for (const auto& [idx, o] : cfg.per_index_overrides) {
    json e = json::object();
    if (o.threshold) e["T"] = *o.threshold;
    if (o.knot_half_width) e["c_T"] = *o.knot_half_width;
    if (o.p_out) e["p_out"] = *o.p_out;
    overrides[std::to_string(idx)] = std::move(e);
  }
  return {{"T", cfg.threshold},     {"c_T", cfg.knot_half_width},
          {"p_inp", cfg.p_inp},     {"p_out", cfg.p_out},
          {"abs_floor", cfg.abs_floor}, {"per_index_overrides", std::move(overrides)}};
}

bool PerturbationBox::contains(const Vector& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

PerturbationBox build_box(const Vector& x, double p_inp, double abs_floor) {
  if (!x.allFinite()) throw ValidationError("build_box: non-finite input");
  const Vector half = (p_inp * x.cwiseAbs()).cwiseMax(abs_floor);
  return {x - half, x + half};
}

DeltaBounds compute_deltas(const Vector& f_x, const StabilityConfig& cfg) {
  const auto k = f_x.size();
  DeltaBounds d{Vector(k), Vector(k), std::vector<Zone>(static_cast<std::size_t>(k))};
  for (Eigen::Index i = 0; i < k; ++i) {
    double t = cfg.threshold, c = cfg.knot_half_width, p = cfg.p_out;
    if (auto it = cfg.per_index_overrides.find(static_cast<std::size_t>(i));
        it != cfg.per_index_overrides.end()) {
      t = it->second.threshold.value_or(t);
      c = it->second.knot_half_width.value_or(c);
      p = it->second.p_out.value_or(p);
    }
    const double mag = std::abs(f_x(i));
    if (mag <= t) {
      d.zones[static_cast<std::size_t>(i)] = Zone::Knot;
      d.lower(i) = -c;
      d.upper(i) = c;
    } else {
      d.zones[static_cast<std::size_t>(i)] = Zone::Wing;
      d.lower(i) = -p * mag;
      d.upper(i) = p * mag;
    }
  }
  return d;
}

std::optional<Violation> check_violation(const Vector& f_x, const Vector& f_xp,
                                         const DeltaBounds& deltas) {
  for (Eigen::Index i = 0; i < f_x.size(); ++i) {
    const double dev = f_xp(i) - f_x(i);
    if (dev < deltas.lower(i) || dev > deltas.upper(i))
      return Violation{static_cast<std::size_t>(i), dev};
  }
  return std::nullopt;
}

double violation_excess(const Vector& f_x, const Vector& f_xp, const DeltaBounds& deltas) {
  const Vector dev = f_xp - f_x;
  const Vector above = dev - deltas.upper;
  const Vector below = deltas.lower - dev;
  return std::max(above.maxCoeff(), below.maxCoeff());
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Verified:
      return "verified";
    case Status::Falsified:
      return "falsified";
    case Status::Unknown:
      break;
  }
  return "unknown";
}

std::optional<Witness> validate_witness(const DenseNetwork& net, const Vector& f_x,
                                        const PerturbationBox& box, const DeltaBounds& deltas,
                                        const Vector& x_prime, double margin) {
  if (!x_prime.allFinite() || !box.contains(x_prime)) return std::nullopt;
  const Vector f_xp = net.forward(x_prime);
  const auto v = check_violation(f_x, f_xp, deltas);
  if (!v) return std::nullopt;
  if (margin > 0.0 && violation_excess(f_x, f_xp, deltas) <= margin) return std::nullopt;
  // Report the output with the largest excess when a margin is demanded.
  Witness w{x_prime, v->index, v->deviation};
  if (margin > 0.0) {
    double best = -1.0;
    for (Eigen::Index i = 0; i < f_x.size(); ++i) {
      const double dev = f_xp(i) - f_x(i);
      const double ex = std::max(dev - deltas.upper(i), deltas.lower(i) - dev);
      if (ex > best) {
        best = ex;
        w.index = static_cast<std::size_t>(i);
        w.deviation = dev;
      }
    }
  }
  return w;
}

}  // namespace stabkit
