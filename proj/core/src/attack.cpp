#include "stabkit/attack.hpp"

#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <random>

namespace stabkit {

using nlohmann::json;

void AttackConfig::validate() const {
  if (steps < 1) throw ValidationError("attack.steps must be >= 1");
  if (!(step_size > 0.0)) throw ValidationError("attack.step_size must be > 0");
  if (restarts < 0) throw ValidationError("attack.restarts must be >= 0");
}

AttackConfig attack_config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("attack: expected a JSON object");
  AttackConfig cfg;
  if (j.contains("method")) {
    const auto m = j["method"].get<std::string>();
    if (m == "pgd") {
      cfg.method = AttackMethod::PGD;
    } else if (m == "fgsm") {
      cfg.method = AttackMethod::FGSM;
    } else {
      throw ParseError("attack.method: expected \"pgd\" or \"fgsm\", got \"" + m + "\"");
    }
  }
  try {
    cfg.steps = j.value("steps", cfg.steps);
    cfg.step_size = j.value("step_size", cfg.step_size);
    cfg.restarts = j.value("restarts", cfg.restarts);
    cfg.early_stop = j.value("early_stop", cfg.early_stop);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("attack: ") + e.what());
  }
  if (j.contains("index_order")) {
    const auto& o = j["index_order"];
    if (o.is_array()) {
      cfg.explicit_order = o.get<std::vector<std::size_t>>();
    } else if (o == "natural") {
      cfg.index_order = IndexOrder::Natural;
    } else if (o == "by_success") {
      cfg.index_order = IndexOrder::BySuccess;
    } else {
      throw ParseError("attack.index_order: expected \"natural\", \"by_success\" or a list");
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const AttackConfig& cfg) {
  json j = {{"method", cfg.method == AttackMethod::PGD ? "pgd" : "fgsm"},
            {"steps", cfg.steps},
            {"step_size", cfg.step_size},
            {"restarts", cfg.restarts},
            {"early_stop", cfg.early_stop},
            {"seed", cfg.seed}};
  if (!cfg.explicit_order.empty()) {
    j["index_order"] = cfg.explicit_order;
  } else {
    j["index_order"] = cfg.index_order == IndexOrder::Natural ? "natural" : "by_success";
  }
  return j;
}

namespace {

Vector clamp_to(const PerturbationBox& box, const Vector& x) {
  return x.cwiseMax(box.lower).cwiseMin(box.upper);
}

Vector sign_of(const Vector& g) {
  return g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// Seed per (index, direction, restart) so attacks are order independent.
std::uint64_t mix_seed(std::uint64_t seed, std::size_t index, Direction d, int restart) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t v : {static_cast<std::uint64_t>(index),
                          static_cast<std::uint64_t>(d == Direction::Up ? 1 : 2),
                          static_cast<std::uint64_t>(restart)}) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

}  // namespace

std::optional<Witness> attack_index(const AttackTarget& t, std::size_t index,
                                    Direction direction, const AttackConfig& cfg,
                                    AttackAttempt* attempt, std::size_t* evaluations) {
  const auto i = static_cast<Eigen::Index>(index);
  const double dir = sign_of(direction);
  const double bound = direction == Direction::Up ? t.deltas.upper(i) : t.deltas.lower(i);
  const Vector radius = t.box.radius();
  if (attempt) *attempt = {index, direction, false, 0.0};
  if (radius.maxCoeff() <= 0.0) return std::nullopt;

  auto count = [&] {
    if (evaluations) ++*evaluations;
  };
  auto exceeds = [&](double dev) { return dir * dev > dir * bound; };

  const double scale = t.p_inp > 0.0 ? cfg.step_size / t.p_inp : cfg.step_size;
  const Vector step = cfg.method == AttackMethod::FGSM ? radius : Vector(scale * radius);
  const int iterations = cfg.method == AttackMethod::FGSM ? 1 : cfg.steps;

  std::optional<Witness> best;
  double best_excess = 0.0;
  double best_dev = 0.0;

  // Keeps the most violating validated iterate.
  auto consider = [&](const Vector& xp, const Vector& f_xp) {
    const double dev = f_xp(i) - t.f_x(i);
    best_dev = std::max(best_dev, dir * dev);
    if (!exceeds(dev)) return;
    auto w = validate_witness(t.net, t.f_x, t.box, t.deltas, xp);
    if (!w) return;
    const double excess = dir * (dev - bound);
    if (!best || excess > best_excess) {
      best = std::move(w);
      best_excess = excess;
    }
  };

  for (int r = 0; r <= cfg.restarts; ++r) {
    Vector xp = t.x;
    if (r > 0) {
      std::mt19937_64 rng(mix_seed(cfg.seed, index, direction, r));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (Eigen::Index j = 0; j < xp.size(); ++j) xp(j) = t.x(j) + u(rng) * radius(j);
      xp = clamp_to(t.box, xp);
    }
    for (int it = 0; it < iterations; ++it) {
      auto [f_xp, grad] = t.net.value_and_gradient(xp, index, direction);
      count();
      if (it > 0 || r > 0) consider(xp, f_xp);
      const Vector dirn = sign_of(grad);
      if (dirn.isZero()) break;
      Vector next = clamp_to(t.box, xp + step.cwiseProduct(dirn));
      if (next == xp) break;  // stuck on the box boundary
      xp = std::move(next);
      if (it + 1 == iterations) consider(xp, t.net.forward(xp));
    }
    if (best && cfg.early_stop) break;
  }

  if (attempt) *attempt = {index, direction, best.has_value(), best_dev};
  return best;
}

AttackOutcome attack_point_detailed(const DenseNetwork& net, const Vector& x,
                                    const AttackConfig& cfg, const StabilityConfig& property) {
  cfg.validate();
  const Vector f_x = net.forward(x);
  const PerturbationBox box = build_box(x, property.p_inp, property.abs_floor);
  const DeltaBounds deltas = compute_deltas(f_x, property);
  const AttackTarget target{net, x, f_x, box, deltas, property.p_inp};

  std::vector<std::size_t> order = cfg.explicit_order;
  if (order.empty()) {
    order.resize(net.output_dim());
    std::iota(order.begin(), order.end(), std::size_t{0});
  } else {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k)
      if (sorted[k] != k || sorted.size() != net.output_dim())
        throw ValidationError("attack.index_order: not a permutation of the output indexes");
  }

  AttackOutcome out;
  out.verdict = Verdict::unknown("attack", "no counterexample found");
  for (std::size_t idx : order) {
    for (Direction d : {Direction::Up, Direction::Down}) {
      AttackAttempt a{};
      auto w = attack_index(target, idx, d, cfg, &a, &out.evaluations);
      out.attempts.push_back(a);
      if (w && out.verdict.status != Status::Falsified)
        out.verdict = Verdict::falsified("attack", std::move(*w));
      if (out.verdict.status == Status::Falsified && cfg.early_stop) return out;
    }
  }
  return out;
}

Verdict attack_point(const DenseNetwork& net, const Vector& x, const AttackConfig& cfg,
                     const StabilityConfig& property) {
  return attack_point_detailed(net, x, cfg, property).verdict;
}

}  // namespace stabkit
