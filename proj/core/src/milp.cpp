#include "stabkit/milp.hpp"

#include "stabkit/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace stabkit {

std::size_t MilpModel::num_phase_binaries() const {
  return static_cast<std::size_t>(std::count_if(binaries.begin(), binaries.end(), [](const auto& b) {
    return b.role == BinaryRole::ReluPhase;
  }));
}

MilpModel encode_network(const DenseNetwork& net, const PerturbationBox& box,
                         const LayerBounds& layer_bounds) {
  if (layer_bounds.layers.size() != net.num_layers())
    throw EncodingError("encode_network: bounds missing for " +
                        std::to_string(net.num_layers() - layer_bounds.layers.size()) + " layer(s)");
  if (box.dim() != net.input_dim()) throw EncodingError("encode_network: box dimension mismatch");

  MilpModel m;
  auto& lp = m.lp;
  for (std::size_t j = 0; j < box.dim(); ++j) {
    const auto e = static_cast<Eigen::Index>(j);
    m.inputs.push_back(lp.add_variable(box.lower(e), box.upper(e), 0.0, "x_" + std::to_string(j)));
  }

  const std::vector<std::size_t>* prev = &m.inputs;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto& layer = net.layer(i);
    const auto& nb = layer_bounds.layers[i];
    if (static_cast<std::size_t>(nb.pre_lower.size()) != layer.out_dim())
      throw EncodingError("encode_network: bounds for layer " + std::to_string(i) +
                          " have the wrong width");
    EncodedLayer enc;
    const std::string tag = std::to_string(i + 1) + "_";
    for (std::size_t j = 0; j < layer.out_dim(); ++j) {
      const auto e = static_cast<Eigen::Index>(j);
      const double l = nb.pre_lower(e), u = nb.pre_upper(e);
      const std::size_t pre = lp.add_variable(l, u, 0.0, "y_" + tag + std::to_string(j) + "_pre");
      const double pl = layer.activation == Activation::ReLU ? std::max(l, 0.0) : l;
      const double pu = layer.activation == Activation::ReLU ? std::max(u, 0.0) : u;
      const std::size_t post =
          lp.add_variable(pl, pu, 0.0, "y_" + tag + std::to_string(j) + "_post");

      // y_pre = W[j,:] . y_prev + b_j
      LinearConstraint affine{{{pre, 1.0}}, Relation::Equal, layer.bias(e)};
      for (std::size_t k = 0; k < prev->size(); ++k) {
        const double w = layer.weights(e, static_cast<Eigen::Index>(k));
        if (w != 0.0) affine.terms.emplace_back((*prev)[k], -w);
      }
      lp.add_constraint(std::move(affine));

      long phase = -1;
      if (layer.activation == Activation::Linear || l >= 0.0) {
        lp.add_constraint({{post, 1.0}, {pre, -1.0}}, Relation::Equal, 0.0);
      } else if (u <= 0.0) {
        lp.add_constraint({{post, 1.0}}, Relation::Equal, 0.0);
      } else {
        const std::size_t a = lp.add_variable(0.0, 1.0, 0.0, "a_" + tag + std::to_string(j));
        phase = static_cast<long>(a);
        lp.add_constraint({{post, 1.0}, {pre, -1.0}}, Relation::GreaterEqual, 0.0);
        lp.add_constraint({{post, 1.0}}, Relation::GreaterEqual, 0.0);
        lp.add_constraint({{post, 1.0}, {pre, -1.0}, {a, -l}}, Relation::LessEqual, -l);
        lp.add_constraint({{post, 1.0}, {a, -u}}, Relation::LessEqual, 0.0);
        m.binaries.push_back({a, BinaryRole::ReluPhase, std::min(-l, u)});
      }
      enc.pre.push_back(pre);
      enc.post.push_back(post);
      enc.phase.push_back(phase);
    }
    m.layers.push_back(std::move(enc));
    prev = &m.layers.back().post;
  }
  return m;
}

MilpModel encode_negated_property(MilpModel model, const Vector& f_x, const DeltaBounds& deltas,
                                  double margin, const DenseNetwork* net) {
  if (model.layers.empty()) throw EncodingError("encode_negated_property: model has no outputs");
  const auto& outs = model.outputs();
  if (outs.size() != static_cast<std::size_t>(f_x.size()) || deltas.size() != outs.size())
    throw EncodingError("encode_negated_property: output count mismatch");
  auto& lp = model.lp;
  lp.sense = Sense::Maximize;
  LinearConstraint cover{{}, Relation::GreaterEqual, 1.0};
  std::vector<double> below_target(outs.size()), above_target(outs.size());
  for (std::size_t j = 0; j < outs.size(); ++j) {
    const auto e = static_cast<Eigen::Index>(j);
    const std::size_t y = outs[j];
    const double lo = lp.lower()[y], hi = lp.upper()[y];
    if (!std::isfinite(lo) || !std::isfinite(hi))
      throw EncodingError("encode_negated_property: output " + std::to_string(j) + " is unbounded");

    const double t_lo = f_x(e) + deltas.lower(e) - margin;
    const double t_hi = f_x(e) + deltas.upper(e) + margin;
    below_target[j] = t_lo;
    above_target[j] = t_hi;
    const std::size_t ib = lp.add_variable(0.0, 1.0, 1.0, "indic_minus_" + std::to_string(j));
    const std::size_t ia = lp.add_variable(0.0, 1.0, 1.0, "indic_plus_" + std::to_string(j));
    // indic_- => y <= t_lo  :  y + M ib <= t_lo + M
    const double m_lo = std::max(0.0, hi - t_lo);
    lp.add_constraint({{y, 1.0}, {ib, m_lo}}, Relation::LessEqual, t_lo + m_lo);
    // indic_+ => y >= t_hi  :  y - M ia >= t_hi - M
    const double m_hi = std::max(0.0, t_hi - lo);
    lp.add_constraint({{y, 1.0}, {ia, -m_hi}}, Relation::GreaterEqual, t_hi - m_hi);
    cover.terms.emplace_back(ib, 1.0);
    cover.terms.emplace_back(ia, 1.0);
    model.indicator_below.push_back(ib);
    model.indicator_above.push_back(ia);
    model.binaries.push_back({ib, BinaryRole::IndicatorBelow, -1.0});
    model.binaries.push_back({ia, BinaryRole::IndicatorAbove, -1.0});
  }
  lp.add_constraint(std::move(cover));

  if (net == nullptr) return model;
  // Forward-pass repair: complete the input part of an LP point exactly.
  // Captures copies so the model stays freely movable; `net` must outlive it.
  struct Ids {
    std::vector<std::size_t> inputs;
    std::vector<double> in_lo, in_hi;
    std::vector<EncodedLayer> layers;
    std::vector<std::size_t> below, above;
    std::vector<double> below_target, above_target;
    std::size_t num_vars;
  };
  Ids ids{model.inputs, {}, {}, model.layers, model.indicator_below, model.indicator_above,
          std::move(below_target), std::move(above_target), lp.num_variables()};
  for (std::size_t v : ids.inputs) {
    ids.in_lo.push_back(lp.lower()[v]);
    ids.in_hi.push_back(lp.upper()[v]);
  }
  model.repair = [net, ids = std::move(ids)](const Vector& lp_x) -> std::optional<Vector> {
    Vector x(static_cast<Eigen::Index>(ids.inputs.size()));
    for (std::size_t j = 0; j < ids.inputs.size(); ++j)
      x(static_cast<Eigen::Index>(j)) =
          std::clamp(lp_x(static_cast<Eigen::Index>(ids.inputs[j])), ids.in_lo[j], ids.in_hi[j]);
    const ForwardTrace t = net->trace(x);
    Vector a = Vector::Zero(static_cast<Eigen::Index>(ids.num_vars));
    auto set = [&a](std::size_t var, double v) { a(static_cast<Eigen::Index>(var)) = v; };
    for (std::size_t j = 0; j < ids.inputs.size(); ++j) set(ids.inputs[j], x(static_cast<Eigen::Index>(j)));
    for (std::size_t i = 0; i < ids.layers.size(); ++i) {
      const auto& enc = ids.layers[i];
      for (std::size_t j = 0; j < enc.pre.size(); ++j) {
        const auto e = static_cast<Eigen::Index>(j);
        set(enc.pre[j], t.pre[i](e));
        set(enc.post[j], t.post[i](e));
        if (enc.phase[j] >= 0) set(static_cast<std::size_t>(enc.phase[j]), t.pre[i](e) > 0.0 ? 1.0 : 0.0);
      }
    }
    bool any = false;
    const auto& outs = ids.layers.back().post;
    for (std::size_t j = 0; j < outs.size(); ++j) {
      const double y = a(static_cast<Eigen::Index>(outs[j]));
      const bool below = y <= ids.below_target[j];
      const bool above = y >= ids.above_target[j];
      set(ids.below[j], below ? 1.0 : 0.0);
      set(ids.above[j], above ? 1.0 : 0.0);
      any = any || below || above;
    }
    if (!any) return std::nullopt;
    return a;
  };
  return model;
}

namespace {

struct Node {
  std::vector<std::pair<std::size_t, double>> fixes;
  double bound;
  std::size_t depth;
};

bool integral(double v, double tol) { return std::abs(v - std::round(v)) <= tol; }

}  // namespace

MilpResult milp_solve(const MilpModel& model, const MilpOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::optional<clock::time_point> deadline;
  if (std::isfinite(opts.timeout_s))
    deadline = start + std::chrono::duration_cast<clock::duration>(
                           std::chrono::duration<double>(std::max(0.0, opts.timeout_s)));

  const bool maximize = model.lp.sense == Sense::Maximize;
  auto better = [&](double a, double b) { return maximize ? a > b : a < b; };
  const double worst = maximize ? -std::numeric_limits<double>::infinity()
                                : std::numeric_limits<double>::infinity();

  LinearProgram work = model.lp;
  const auto base_lower = model.lp.lower();
  const auto base_upper = model.lp.upper();

  SimplexOptions sopts;
  sopts.feasibility_tol = opts.feasibility_tol;
  sopts.deadline = deadline;

  MilpResult result;
  std::optional<Vector> incumbent;
  double incumbent_value = worst;

  auto accept = [&](const Vector& cand) {
    for (const auto& b : model.binaries)
      if (!integral(cand(static_cast<Eigen::Index>(b.var)), opts.integrality_tol)) return false;
    if (model.lp.max_violation(cand) > 1e-6) return false;
    const double v = model.lp.evaluate(cand);
    if (!incumbent || better(v, incumbent_value)) {
      incumbent = cand;
      incumbent_value = v;
    }
    return true;
  };
  auto finish = [&](SolveStatus::Kind kind) {
    result.status.kind = kind;
    if (kind == SolveStatus::Kind::Feasible) {
      result.status.assignment = *incumbent;
      result.status.objective = incumbent_value;
    }
    return result;
  };

  std::vector<Node> open;
  open.push_back({{}, maximize ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity(), 0});
  while (!open.empty()) {
    if (deadline && clock::now() >= *deadline) return finish(SolveStatus::Kind::TimedOut);

    std::size_t pick = open.size() - 1;
    if (opts.restart_period > 0 && result.nodes > 0 && result.nodes % opts.restart_period == 0) {
      for (std::size_t k = 0; k < open.size(); ++k)
        if (better(open[k].bound, open[pick].bound)) pick = k;
    }
    Node node = std::move(open[pick]);
    open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
    ++result.nodes;

    if (incumbent && !better(node.bound, incumbent_value)) continue;

    work.lower() = base_lower;
    work.upper() = base_upper;
    for (const auto& [v, val] : node.fixes) {
      work.lower()[v] = val;
      work.upper()[v] = val;
    }
    const SolveStatus lp = simplex_solve(work, sopts);
    result.lp_iterations += lp.iterations;
    if (lp.kind == SolveStatus::Kind::TimedOut) return finish(SolveStatus::Kind::TimedOut);
    if (lp.kind == SolveStatus::Kind::Infeasible) continue;
    if (opts.on_node) opts.on_node(node.depth, node.bound, lp.objective);
    if (incumbent && !better(lp.objective, incumbent_value)) continue;

    if (model.repair) {
      if (auto cand = model.repair(lp.assignment); cand && accept(*cand) && opts.first_feasible)
        return finish(SolveStatus::Kind::Feasible);
    }

    // Most ambiguous fractional binary; ties go to the lowest variable id.
    const BinaryVar* branch = nullptr;
    for (const auto& b : model.binaries) {
      if (integral(lp.assignment(static_cast<Eigen::Index>(b.var)), opts.integrality_tol)) continue;
      if (!branch || b.priority > branch->priority ||
          (b.priority == branch->priority && b.var < branch->var))
        branch = &b;
    }
    if (!branch) {
      Vector cand = lp.assignment;
      for (const auto& b : model.binaries) {
        auto& v = cand(static_cast<Eigen::Index>(b.var));
        v = std::round(v);
      }
      if (!accept(cand)) accept(lp.assignment);
      if (incumbent && opts.first_feasible) return finish(SolveStatus::Kind::Feasible);
      continue;
    }

    const double frac = lp.assignment(static_cast<Eigen::Index>(branch->var));
    double first = frac >= 0.5 ? 1.0 : 0.0;
    if (branch->role != BinaryRole::ReluPhase) first = 1.0;
    // Depth-first: the child pushed last is explored next.
    for (double val : {1.0 - first, first}) {
      Node child{node.fixes, lp.objective, node.depth + 1};
      child.fixes.emplace_back(branch->var, val);
      open.push_back(std::move(child));
    }
  }
  return finish(incumbent ? SolveStatus::Kind::Feasible : SolveStatus::Kind::Infeasible);
}

}  // namespace stabkit
