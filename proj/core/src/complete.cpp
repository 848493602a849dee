#include "stabkit/complete.hpp"

#include "stabkit/bounds.hpp"
#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace stabkit {

using nlohmann::json;

namespace {

double timeout_from_json(const json& v) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (v.is_string() && (v == "inf" || v == "infinity")) return std::numeric_limits<double>::infinity();
  if (!v.is_number() || v.get<double>() < 0.0)
    throw ParseError("solver.timeout_s: expected a non-negative number, null or \"inf\"");
  return v.get<double>();
}

}  // namespace

SolverConfig solver_config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("solver: expected a JSON object");
  SolverConfig cfg;
  if (j.contains("timeout_s")) cfg.timeout_s = timeout_from_json(j["timeout_s"]);
  try {
    cfg.integrality_tol = j.value("integrality_tol", cfg.integrality_tol);
    cfg.feasibility_tol = j.value("feasibility_tol", cfg.feasibility_tol);
    cfg.violation_margin = j.value("violation_margin", cfg.violation_margin);
  } catch (const json::exception& e) {
    throw ParseError(std::string("solver: ") + e.what());
  }
  if (j.contains("initial_bounds")) {
    const auto s = j["initial_bounds"].get<std::string>();
    if (s == "symbolic") {
      cfg.initial_bounds = BoundSeed::Symbolic;
    } else if (s == "crown") {
      cfg.initial_bounds = BoundSeed::Crown;
    } else {
      throw ParseError("solver.initial_bounds: expected \"symbolic\" or \"crown\"");
    }
  }
  if (!(cfg.integrality_tol > 0.0) || !(cfg.feasibility_tol > 0.0) || cfg.violation_margin < 0.0)
    throw ValidationError("solver: tolerances must be positive");
  return cfg;
}

json to_json(const SolverConfig& cfg) {
  json j = {{"integrality_tol", cfg.integrality_tol},
            {"feasibility_tol", cfg.feasibility_tol},
            {"violation_margin", cfg.violation_margin},
            {"initial_bounds", cfg.initial_bounds == BoundSeed::Symbolic ? "symbolic" : "crown"}};
  if (std::isfinite(cfg.timeout_s)) {
    j["timeout_s"] = cfg.timeout_s;
  } else {
    j["timeout_s"] = nullptr;
  }
  return j;
}

CompleteOutcome complete_verify_detailed(const DenseNetwork& net, const Vector& x,
                                         const SolverConfig& cfg, const StabilityConfig& property,
                                         std::size_t point_id) {
  const std::string label = "complete";
  const Vector f_x = net.forward(x);
  const PerturbationBox box = build_box(x, property.p_inp, property.abs_floor);
  const DeltaBounds deltas = compute_deltas(f_x, property);

  CompleteOutcome out;
  SymbolicResult sym = symbolic_propagate(net, box);
  LayerBounds bounds = std::move(sym.bounds);
  if (bounds_fit(f_x, deltas, bounds.output().post_lower, bounds.output().post_upper)) {
    out.verdict = Verdict::verified(label);
    return out;
  }
  if (cfg.initial_bounds == BoundSeed::Crown) {
    bounds = crown_propagate(net, box, bounds);
    if (bounds_fit(f_x, deltas, bounds.output().post_lower, bounds.output().post_upper)) {
      out.verdict = Verdict::verified(label);
      return out;
    }
  }

  MilpModel model = encode_negated_property(encode_network(net, box, bounds), f_x, deltas,
                                            cfg.violation_margin, &net);
  out.unstable_relus = model.num_phase_binaries();
  if (cfg.dump_dir) {
    std::ofstream dump(*cfg.dump_dir / ("milp_point_" + std::to_string(point_id) + ".lp"));
    dump << model.lp.dump();
  }

  MilpOptions mopts;
  mopts.timeout_s = cfg.timeout_s;
  mopts.integrality_tol = cfg.integrality_tol;
  mopts.feasibility_tol = cfg.feasibility_tol;
  ++out.milp_calls;
  const MilpResult res = milp_solve(model, mopts);
  out.nodes = res.nodes;

  switch (res.status.kind) {
    case SolveStatus::Kind::Infeasible:
      out.verdict = Verdict::verified(label);
      break;
    case SolveStatus::Kind::TimedOut:
      out.verdict = Verdict::unknown(label, "timed out");
      break;
    case SolveStatus::Kind::Feasible: {
      Vector xp(static_cast<Eigen::Index>(model.inputs.size()));
      for (std::size_t j = 0; j < model.inputs.size(); ++j)
        xp(static_cast<Eigen::Index>(j)) =
            res.status.assignment(static_cast<Eigen::Index>(model.inputs[j]));
      xp = xp.cwiseMax(box.lower).cwiseMin(box.upper);
      if (auto w = validate_witness(net, f_x, box, deltas, xp, 1e-6)) {
        out.verdict = Verdict::falsified(label, std::move(*w));
      } else {
        out.verdict = Verdict::unknown(label, "solver witness failed forward-pass revalidation");
      }
      break;
    }
  }
  return out;
}

Verdict complete_verify(const DenseNetwork& net, const Vector& x, const SolverConfig& cfg,
                        const StabilityConfig& property) {
  return complete_verify_detailed(net, x, cfg, property).verdict;
}

}  // namespace stabkit
