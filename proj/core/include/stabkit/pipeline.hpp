#pragma once

#include "stabkit/attack.hpp"
#include "stabkit/bounds.hpp"
#include "stabkit/complete.hpp"
#include "stabkit/network.hpp"
#include "stabkit/property.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace stabkit {

/// What a brick evaluator sees for one test point.
struct PointContext {
  const DenseNetwork& net;
  const Vector& x;
  const StabilityConfig& property;
  std::size_t point_id;
  /// Output indexes ordered by past attack success; empty when unused.
  const std::vector<std::size_t>& attack_order;
};

struct BrickOutcome {
  Verdict verdict;
  std::vector<AttackAttempt> attempts;
  std::size_t milp_calls = 0;
  /// Largest output bound width seen by a bounds brick.
  std::optional<double> bound_width;
};

struct Brick {
  std::string label;
  bool can_verify = false;
  bool can_falsify = false;
  /// Reads PointContext::attack_order, which forces sequential runs.
  bool uses_attack_order = false;
  std::function<BrickOutcome(const PointContext&)> evaluate;
};

Brick make_attack_brick(AttackConfig cfg);
Brick make_bounds_brick(BoundMethod method);
Brick make_complete_brick(SolverConfig cfg);

/// Everything needed to reproduce a run; mirrors the run-config JSON.
struct RunConfig {
  std::filesystem::path model;
  std::filesystem::path data;
  StabilityConfig property;
  std::vector<std::string> bricks{"attack", "bounds", "complete"};
  AttackConfig attack;
  BoundMethod bounds_method = BoundMethod::Best;
  SolverConfig solver;
  std::filesystem::path out;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

/// Missing keys keep their defaults; `base` supplies them.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json to_json(const RunConfig& cfg);

/// Builds the brick sequence named in `cfg.bricks` ("attack", "bounds",
/// "complete").
std::vector<Brick> make_bricks(const RunConfig& cfg);

struct BrickRun {
  std::string label;
  Status status = Status::Unknown;
  double elapsed_s = 0.0;
  std::string diagnostic;
};

struct PointRecord {
  std::size_t id = 0;
  std::vector<BrickRun> runs;  // bricks actually run, in order
  Status status = Status::Unknown;
  std::string decided_by;
  std::optional<Witness> witness;
  std::string diagnostic;
  std::vector<AttackAttempt> attempts;
  std::size_t milp_calls = 0;
  std::optional<double> bound_width;
};

struct BrickSummary {
  std::string label;
  bool can_verify = false;
  bool can_falsify = false;
  std::size_t tested = 0;
  std::size_t verified = 0;
  std::size_t falsified = 0;
  double runtime_s = 0.0;
};

struct PipelineReport {
  std::vector<BrickSummary> per_brick;
  std::vector<PointRecord> points;  // ordered by id
  std::size_t verified = 0;
  std::size_t falsified = 0;
  std::size_t unknown = 0;
  double total_runtime_s = 0.0;  // sum of per-brick runtimes
  double wall_clock_s = 0.0;
  /// Successful attacks per output index: {down, up}.
  std::vector<std::array<std::size_t, 2>> attack_histogram;
};

struct PipelineOptions {
  std::size_t jobs = 1;
};

/// Sends every point through the bricks until one decides it. A brick
/// that throws, or returns a verdict outside its declared capabilities,
/// leaves the point Unknown for that brick and the next brick runs.
/// Attack bricks with IndexOrder::BySuccess force sequential processing.
PipelineReport run_pipeline(const DenseNetwork& net, const std::vector<Vector>& points,
                            const std::vector<Brick>& bricks, const StabilityConfig& property,
                            const PipelineOptions& options = {});

nlohmann::json to_json(const PipelineReport& report);
nlohmann::json to_json(const Witness& w);

/// Per-brick tested / True / False / runtime table. `-` marks a verdict the
/// brick cannot produce, `0` one it can produce but did not.
std::string summary_table(const PipelineReport& report);
std::string histogram_csv(const PipelineReport& report);
std::string points_csv(const PipelineReport& report);

struct ReportSummary {
  std::string text;
  nlohmann::json json;
};

ReportSummary summarize_report(const PipelineReport& report);

}  // namespace stabkit
