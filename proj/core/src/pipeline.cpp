#include "stabkit/pipeline.hpp"

#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

namespace stabkit {

using nlohmann::json;

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool exceeds_capability(const Brick& b, Status s) {
  return (s == Status::Verified && !b.can_verify) || (s == Status::Falsified && !b.can_falsify);
}

std::vector<std::size_t> success_order(const std::vector<std::array<std::size_t, 2>>& hist) {
  std::vector<std::size_t> order(hist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return hist[a][0] + hist[a][1] > hist[b][0] + hist[b][1];
  });
  return order;
}

void add_successes(std::vector<std::array<std::size_t, 2>>& hist,
                   const std::vector<AttackAttempt>& attempts) {
  for (const auto& a : attempts)
    if (a.success && a.index < hist.size()) ++hist[a.index][a.direction == Direction::Up ? 1 : 0];
}

PointRecord run_point(const DenseNetwork& net, const Vector& x, std::size_t id,
                      const std::vector<Brick>& bricks, const StabilityConfig& property,
                      const std::vector<std::size_t>& attack_order) {
  PointRecord rec;
  rec.id = id;
  const PointContext ctx{net, x, property, id, attack_order};
  for (const auto& brick : bricks) {
    BrickRun run{brick.label, Status::Unknown, 0.0, {}};
    const auto t0 = std::chrono::steady_clock::now();
    BrickOutcome out;
    try {
      out = brick.evaluate(ctx);
      if (exceeds_capability(brick, out.verdict.status)) {
        out.verdict = Verdict::unknown(brick.label, "error: verdict " +
                                                        std::string(to_string(out.verdict.status)) +
                                                        " outside the brick's capabilities");
      }
    } catch (const std::exception& e) {
      out = {};
      out.verdict = Verdict::unknown(brick.label, std::string("error: ") + e.what());
    }
    run.elapsed_s = seconds_since(t0);
    run.status = out.verdict.status;
    run.diagnostic = out.verdict.diagnostic;
    rec.runs.push_back(run);
    rec.attempts.insert(rec.attempts.end(), out.attempts.begin(), out.attempts.end());
    rec.milp_calls += out.milp_calls;
    if (out.bound_width) rec.bound_width = out.bound_width;
    if (out.verdict.status != Status::Unknown) {
      rec.status = out.verdict.status;
      rec.decided_by = brick.label;
      rec.witness = std::move(out.verdict.witness);
      rec.diagnostic.clear();
      break;
    }
    rec.diagnostic = out.verdict.diagnostic;
  }
  return rec;
}

std::string fmt_double(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

Brick make_attack_brick(AttackConfig cfg) {
  cfg.validate();
  Brick b;
  b.label = "attack";
  b.can_falsify = true;
  b.uses_attack_order = cfg.explicit_order.empty() && cfg.index_order == IndexOrder::BySuccess;
  b.evaluate = [cfg](const PointContext& ctx) {
    AttackConfig local = cfg;
    if (cfg.explicit_order.empty() && cfg.index_order == IndexOrder::BySuccess)
      local.explicit_order = ctx.attack_order;
    AttackOutcome a = attack_point_detailed(ctx.net, ctx.x, local, ctx.property);
    BrickOutcome out;
    out.verdict = std::move(a.verdict);
    out.attempts = std::move(a.attempts);
    return out;
  };
  return b;
}

Brick make_bounds_brick(BoundMethod method) {
  Brick b;
  b.label = "bounds";
  b.can_verify = true;
  b.evaluate = [method](const PointContext& ctx) {
    const PerturbationBox box = build_box(ctx.x, ctx.property.p_inp, ctx.property.abs_floor);
    const DeltaBounds deltas = compute_deltas(ctx.net.forward(ctx.x), ctx.property);
    CertifyResult c = certify_detailed(ctx.net, ctx.x, box, deltas, method);
    BrickOutcome out;
    out.verdict = std::move(c.verdict);
    out.bound_width = (c.upper - c.lower).maxCoeff();
    return out;
  };
  return b;
}

Brick make_complete_brick(SolverConfig cfg) {
  Brick b;
  b.label = "complete";
  b.can_verify = true;
  b.can_falsify = true;
  b.evaluate = [cfg](const PointContext& ctx) {
    CompleteOutcome c = complete_verify_detailed(ctx.net, ctx.x, cfg, ctx.property, ctx.point_id);
    BrickOutcome out;
    out.verdict = std::move(c.verdict);
    out.milp_calls = c.milp_calls;
    return out;
  };
  return b;
}

RunConfig run_config_from_json(const json& j, RunConfig cfg) {
  if (!j.is_object()) throw ParseError("run config: expected a JSON object");
  try {
    if (j.contains("model")) cfg.model = j["model"].get<std::string>();
    if (j.contains("data")) cfg.data = j["data"].get<std::string>();
    if (j.contains("property")) cfg.property = stability_config_from_json(j["property"]);
    if (j.contains("bricks")) cfg.bricks = j["bricks"].get<std::vector<std::string>>();
    if (j.contains("attack")) cfg.attack = attack_config_from_json(j["attack"]);
    if (j.contains("brick_b_method"))
      cfg.bounds_method = bound_method_from_string(j["brick_b_method"].get<std::string>());
    if (j.contains("solver")) cfg.solver = solver_config_from_json(j["solver"]);
    if (j.contains("out")) cfg.out = j["out"].get<std::string>();
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run config: ") + e.what());
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  return {{"model", cfg.model.string()},
          {"data", cfg.data.string()},
          {"property", to_json(cfg.property)},
          {"bricks", cfg.bricks},
          {"attack", to_json(cfg.attack)},
          {"brick_b_method", to_string(cfg.bounds_method)},
          {"solver", to_json(cfg.solver)},
          {"out", cfg.out.string()},
          {"jobs", cfg.jobs},
          {"seed", cfg.seed}};
}

std::vector<Brick> make_bricks(const RunConfig& cfg) {
  if (cfg.bricks.empty()) throw ValidationError("bricks: at least one brick is required");
  std::vector<Brick> out;
  for (std::size_t i = 0; i < cfg.bricks.size(); ++i) {
    const auto& name = cfg.bricks[i];
    if (name == "attack") {
      AttackConfig a = cfg.attack;
      a.seed = cfg.seed;
      out.push_back(make_attack_brick(a));
    } else if (name == "bounds") {
      out.push_back(make_bounds_brick(cfg.bounds_method));
    } else if (name == "complete") {
      out.push_back(make_complete_brick(cfg.solver));
    } else {
      throw ParseError("bricks[" + std::to_string(i) + "]: unknown brick '" + name +
                       "' (expected attack, bounds or complete)");
    }
  }
  return out;
}

PipelineReport run_pipeline(const DenseNetwork& net, const std::vector<Vector>& points,
                            const std::vector<Brick>& bricks, const StabilityConfig& property,
                            const PipelineOptions& options) {
  if (points.empty()) throw ValidationError("run_pipeline: dataset is empty");
  if (bricks.empty()) throw ValidationError("run_pipeline: brick list is empty");
  property.validate();
  for (std::size_t i = 0; i < points.size(); ++i)
    if (static_cast<std::size_t>(points[i].size()) != net.input_dim())
      throw DimensionError("run_pipeline: point " + std::to_string(i) + " has " +
                           std::to_string(points[i].size()) + " entries, network expects " +
                           std::to_string(net.input_dim()));

  PipelineReport report;
  report.attack_histogram.assign(net.output_dim(), {0, 0});
  report.points.resize(points.size());
  const auto t0 = std::chrono::steady_clock::now();

  // Success-ordered attacks depend on earlier points, so they run in order.
  bool sequential = options.jobs <= 1;
  for (const auto& b : bricks) sequential = sequential || b.uses_attack_order;

  std::vector<std::array<std::size_t, 2>> live_hist = report.attack_histogram;
  const std::vector<std::size_t> natural = success_order(live_hist);
  if (sequential) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto order = success_order(live_hist);
      report.points[i] = run_point(net, points[i], i, bricks, property, order);
      add_successes(live_hist, report.points[i].attempts);
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < points.size(); i = next++)
        report.points[i] = run_point(net, points[i], i, bricks, property, natural);
    };
    const std::size_t n = std::min(options.jobs, points.size());
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  report.wall_clock_s = seconds_since(t0);

  report.per_brick.resize(bricks.size());
  for (std::size_t b = 0; b < bricks.size(); ++b) {
    report.per_brick[b].label = bricks[b].label;
    report.per_brick[b].can_verify = bricks[b].can_verify;
    report.per_brick[b].can_falsify = bricks[b].can_falsify;
  }
  for (const auto& rec : report.points) {
    for (std::size_t b = 0; b < rec.runs.size(); ++b) {
      auto& s = report.per_brick[b];
      ++s.tested;
      s.runtime_s += rec.runs[b].elapsed_s;
      if (rec.runs[b].status == Status::Verified) ++s.verified;
      if (rec.runs[b].status == Status::Falsified) ++s.falsified;
    }
    add_successes(report.attack_histogram, rec.attempts);
    switch (rec.status) {
      case Status::Verified: ++report.verified; break;
      case Status::Falsified: ++report.falsified; break;
      case Status::Unknown: ++report.unknown; break;
    }
  }
  for (const auto& s : report.per_brick) report.total_runtime_s += s.runtime_s;
  return report;
}

json to_json(const Witness& w) {
  return {{"x_prime", to_std(w.x_prime)}, {"index", w.index}, {"deviation", w.deviation}};
}

json to_json(const PipelineReport& r) {
  json per_brick = json::array();
  for (const auto& s : r.per_brick) {
    per_brick.push_back({{"label", s.label},
                         {"can_verify", s.can_verify},
                         {"can_falsify", s.can_falsify},
                         {"tested", s.tested},
                         {"verified", s.verified},
                         {"falsified", s.falsified},
                         {"runtime_s", s.runtime_s}});
  }
  json points = json::array();
  for (const auto& p : r.points) {
    json runs = json::array();
    for (const auto& run : p.runs) {
      json jr = {{"brick", run.label}, {"status", to_string(run.status)}, {"elapsed_s", run.elapsed_s}};
      if (!run.diagnostic.empty()) jr["diagnostic"] = run.diagnostic;
      runs.push_back(std::move(jr));
    }
    json jp = {{"id", p.id},
               {"status", to_string(p.status)},
               {"decided_by", p.decided_by.empty() ? json(nullptr) : json(p.decided_by)},
               {"bricks", std::move(runs)},
               {"milp_calls", p.milp_calls}};
    if (p.witness) jp["witness"] = to_json(*p.witness);
    if (!p.diagnostic.empty()) jp["diagnostic"] = p.diagnostic;
    if (p.bound_width) jp["bound_width"] = *p.bound_width;
    points.push_back(std::move(jp));
  }
  return {{"per_brick", std::move(per_brick)},
          {"totals",
           {{"points", r.points.size()},
            {"verified", r.verified},
            {"falsified", r.falsified},
            {"unknown", r.unknown},
            {"runtime_s", r.total_runtime_s},
            {"wall_clock_s", r.wall_clock_s}}},
          {"points", std::move(points)},
          {"attack_histogram", r.attack_histogram}};
}

std::string summary_table(const PipelineReport& r) {
  constexpr int kLabel = 14;
  constexpr int kCol = 12;
  std::ostringstream os;
  auto row = [&](const std::string& name, auto&& cell) {
    os << std::left << std::setw(kLabel) << name << std::right;
    for (const auto& s : r.per_brick) os << std::setw(kCol) << cell(s);
    os << '\n';
  };
  row("", [](const BrickSummary& s) { return s.label; });
  row("tested", [](const BrickSummary& s) { return std::to_string(s.tested); });
  row("True", [](const BrickSummary& s) {
    return s.can_verify ? std::to_string(s.verified) : std::string("-");
  });
  row("False", [](const BrickSummary& s) {
    return s.can_falsify ? std::to_string(s.falsified) : std::string("-");
  });
  row("runtime [s]", [](const BrickSummary& s) { return fmt_double(s.runtime_s, 3); });
  os << "total: " << r.points.size() << " points, " << r.verified << " True, " << r.falsified
     << " False, " << r.unknown << " unknown, " << fmt_double(r.total_runtime_s, 3) << " s\n";
  return os.str();
}

std::string histogram_csv(const PipelineReport& r) {
  std::ostringstream os;
  os << "index,down,up\n";
  for (std::size_t i = 0; i < r.attack_histogram.size(); ++i)
    os << i << ',' << r.attack_histogram[i][0] << ',' << r.attack_histogram[i][1] << '\n';
  return os.str();
}

std::string points_csv(const PipelineReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "id,status,decided_by,index,deviation,bound_width,milp_calls\n";
  for (const auto& p : r.points) {
    os << p.id << ',' << to_string(p.status) << ',' << p.decided_by << ',';
    if (p.witness) os << p.witness->index << ',' << p.witness->deviation;
    else os << ',';
    os << ',';
    if (p.bound_width) os << *p.bound_width;
    os << ',' << p.milp_calls << '\n';
  }
  return os.str();
}

ReportSummary summarize_report(const PipelineReport& r) {
  return {summary_table(r), to_json(r)};
}

}  // namespace stabkit
