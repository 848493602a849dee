#include "stabkit/surrogates.hpp"

#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stabkit {

using nlohmann::json;

namespace {

constexpr std::size_t kCalibrationSamples = 4096;
constexpr std::uint64_t kCalibrationStream = 0xca11b7a7e5eedULL;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Fixed affine map + noise used by the random target function.
struct AffineTarget {
  Matrix a;
  Vector b;
};

AffineTarget affine_target(const SurrogateSpec& spec) {
  std::mt19937_64 rng(stream_seed(spec.seed, 0xaff1eULL));
  const auto n = static_cast<Eigen::Index>(spec.widths.front());
  const auto k = static_cast<Eigen::Index>(spec.widths.back());
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  std::uniform_real_distribution<double> u(-s, s);
  AffineTarget t{Matrix(k, n), Vector(k)};
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < n; ++j) t.a(i, j) = u(rng);
  std::uniform_real_distribution<double> ub(-1.0, 1.0);
  for (Eigen::Index i = 0; i < k; ++i) t.b(i) = ub(rng);
  return t;
}

// Raw inputs (one per column) and raw targets.
std::pair<Matrix, Matrix> raw_sample(const SurrogateSpec& spec, std::size_t n, std::uint64_t stream) {
  std::mt19937_64 rng(stream_seed(spec.seed, stream));
  const auto dim = static_cast<Eigen::Index>(spec.widths.front());
  const auto k = static_cast<Eigen::Index>(spec.widths.back());
  const auto cols = static_cast<Eigen::Index>(n);
  Matrix x(dim, cols);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < dim; ++r)
      x(r, c) = spec.domain_lower(r) + u01(rng) * (spec.domain_upper(r) - spec.domain_lower(r));

  Matrix y(k, cols);
  switch (spec.target) {
    case TargetFunction::Rosenbrock2D:
      for (Eigen::Index c = 0; c < cols; ++c) y(0, c) = rosenbrock(x(0, c), x(1, c));
      break;
    case TargetFunction::BrakingDistanceToy:
      for (Eigen::Index c = 0; c < cols; ++c) y(0, c) = braking_distance(x(0, c), x(1, c));
      break;
    case TargetFunction::RandomAffinePlusNoise: {
      const AffineTarget t = affine_target(spec);
      y = t.a * x;
      y.colwise() += t.b;
      if (spec.noise > 0.0) {
        std::normal_distribution<double> g(0.0, spec.noise);
        for (Eigen::Index c = 0; c < cols; ++c)
          for (Eigen::Index r = 0; r < k; ++r) y(r, c) += g(rng);
      }
      break;
    }
  }
  return {std::move(x), std::move(y)};
}

Vector vec_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string("surrogate.") + what + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ParseError(std::string("surrogate.") + what + "[" + std::to_string(i) +
                       "]: expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace

std::string_view to_string(TargetFunction t) {
  switch (t) {
    case TargetFunction::Rosenbrock2D: return "rosenbrock";
    case TargetFunction::BrakingDistanceToy: return "braking";
    case TargetFunction::RandomAffinePlusNoise: return "random_affine";
  }
  return "?";
}

TargetFunction target_function_from_string(std::string_view s) {
  if (s == "rosenbrock") return TargetFunction::Rosenbrock2D;
  if (s == "braking") return TargetFunction::BrakingDistanceToy;
  if (s == "random_affine") return TargetFunction::RandomAffinePlusNoise;
  throw ParseError("surrogate.target: unknown target function '" + std::string(s) + "'");
}

void SurrogateSpec::validate() const {
  if (widths.size() < 2) throw ValidationError("surrogate.widths: need at least input and output");
  for (std::size_t i = 0; i < widths.size(); ++i)
    if (widths[i] == 0)
      throw ValidationError("surrogate.widths[" + std::to_string(i) + "]: must be positive");
  if (static_cast<std::size_t>(domain_lower.size()) != widths.front() ||
      static_cast<std::size_t>(domain_upper.size()) != widths.front())
    throw ValidationError("surrogate.domain: dimension does not match the input width");
  for (Eigen::Index i = 0; i < domain_lower.size(); ++i)
    if (!(domain_lower(i) < domain_upper(i)))
      throw ValidationError("surrogate.domain: degenerate along dimension " + std::to_string(i));
  if (target != TargetFunction::RandomAffinePlusNoise &&
      (widths.front() != 2 || widths.back() != 1))
    throw ValidationError("surrogate.widths: " + std::string(to_string(target)) +
                          " maps 2 inputs to 1 output");
  if (target == TargetFunction::BrakingDistanceToy && domain_lower(1) <= 0.0)
    throw ValidationError("surrogate.domain: friction coefficient must stay positive");
  if (epochs < 0) throw ValidationError("surrogate.epochs: must be non-negative");
  if (batch_size == 0) throw ValidationError("surrogate.batch_size: must be positive");
  if (!(learning_rate >= 0.0)) throw ValidationError("surrogate.learning_rate: must be >= 0");
  if (n_train == 0) throw ValidationError("surrogate.n_train: must be positive");
  if (noise < 0.0) throw ValidationError("surrogate.noise: must be >= 0");
  if (!std::isfinite(output_scale)) throw ValidationError("surrogate.output_scale: must be finite");
  for (int c : checkpoints)
    if (c < 0 || c > epochs)
      throw ValidationError("surrogate.checkpoints: " + std::to_string(c) + " outside [0, epochs]");
}

SurrogateSpec surrogate_spec_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("surrogate: expected a JSON object");
  SurrogateSpec s;
  try {
    if (j.contains("preset")) s = preset_spec(j["preset"].get<std::string>());
    if (j.contains("target")) s.target = target_function_from_string(j["target"].get<std::string>());
    if (j.contains("widths")) s.widths = j["widths"].get<std::vector<std::size_t>>();
    if (j.contains("domain")) {
      const auto& d = j["domain"];
      if (!d.is_object() || !d.contains("lower") || !d.contains("upper"))
        throw ParseError("surrogate.domain: expected {\"lower\": [...], \"upper\": [...]}");
      s.domain_lower = vec_from_json(d["lower"], "domain.lower");
      s.domain_upper = vec_from_json(d["upper"], "domain.upper");
    }
    s.epochs = j.value("epochs", s.epochs);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.n_train = j.value("n_train", s.n_train);
    s.seed = j.value("seed", s.seed);
    s.checkpoints = j.value("checkpoints", s.checkpoints);
    s.noise = j.value("noise", s.noise);
    s.output_scale = j.value("output_scale", s.output_scale);
  } catch (const json::exception& e) {
    throw ParseError(std::string("surrogate: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const SurrogateSpec& s) {
  return {{"target", to_string(s.target)},
          {"widths", s.widths},
          {"domain",
           {{"lower", std::vector<double>(s.domain_lower.begin(), s.domain_lower.end())},
            {"upper", std::vector<double>(s.domain_upper.begin(), s.domain_upper.end())}}},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate},
          {"n_train", s.n_train},
          {"seed", s.seed},
          {"checkpoints", s.checkpoints},
          {"noise", s.noise},
          {"output_scale", s.output_scale}};
}

SurrogateSpec preset_spec(std::string_view name) {
  SurrogateSpec s;
  if (name == "rosenbrock") {
    s.target = TargetFunction::Rosenbrock2D;
    s.domain_lower = Vector{{-2.0, -1.0}};
    s.domain_upper = Vector{{2.0, 3.0}};
    s.widths = {2, 16, 16, 1};
    s.epochs = 2000;
  } else if (name == "braking") {
    s.target = TargetFunction::BrakingDistanceToy;
    s.domain_lower = Vector{{10.0, 0.1}};  // v [m/s], mu
    s.domain_upper = Vector{{90.0, 0.8}};
    s.widths = {2, 16, 16, 1};
    s.epochs = 500;
  } else if (name == "random-shape") {
    s.target = TargetFunction::RandomAffinePlusNoise;
    s.widths = {216, 165, 165, 81};
    s.domain_lower = Vector::Constant(216, -1.0);
    s.domain_upper = Vector::Constant(216, 1.0);
    s.epochs = 0;
  } else {
    throw ParseError("unknown preset '" + std::string(name) +
                     "' (expected rosenbrock, braking or random-shape)");
  }
  return s;
}

double rosenbrock(double x, double y) {
  return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
}

double braking_distance(double v, double mu) {
  constexpr double g = 9.81;
  constexpr double t_r = 1.0;
  return v * v / (2.0 * mu * g) + t_r * v;
}

Vector Normalization::normalize_input(const Vector& raw) const {
  return (2.0 * (raw - input_lower).array() / (input_upper - input_lower).array() - 1.0).matrix();
}

Vector Normalization::denormalize_input(const Vector& unit) const {
  return (input_lower.array() + 0.5 * (unit.array() + 1.0) * (input_upper - input_lower).array())
      .matrix();
}

Vector Normalization::normalize_target(const Vector& raw) const {
  Vector out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double span = target_upper(i) - target_lower(i);
    out(i) = span > 0.0 ? 2.0 * (raw(i) - target_lower(i)) / span - 1.0 : 0.0;
  }
  return out;
}

Normalization normalization_for(const SurrogateSpec& spec) {
  spec.validate();
  const auto [x, y] = raw_sample(spec, kCalibrationSamples, kCalibrationStream);
  (void)x;
  return {spec.domain_lower, spec.domain_upper, y.rowwise().minCoeff(), y.rowwise().maxCoeff()};
}

Dataset generate_dataset(const SurrogateSpec& spec, std::size_t n_points, std::uint64_t stream) {
  if (n_points == 0) throw ValidationError("generate_dataset: n_points must be >= 1");
  const Normalization norm = normalization_for(spec);
  auto [x, y] = raw_sample(spec, n_points, stream);
  Dataset d{Matrix(x.rows(), x.cols()), Matrix(y.rows(), y.cols())};
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    d.inputs.col(c) = norm.normalize_input(x.col(c));
    d.targets.col(c) = norm.normalize_target(y.col(c));
  }
  return d;
}

DenseNetwork random_network(const std::vector<std::size_t>& widths, std::uint64_t seed,
                            double output_scale) {
  if (widths.size() < 2) throw ValidationError("random_network: need at least two widths");
  std::mt19937_64 rng(stream_seed(seed, 0x1a17ULL));
  std::vector<DenseLayer> layers;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i - 1]);
    const auto out = static_cast<Eigen::Index>(widths[i]);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-s, s);
    DenseLayer l;
    l.weights.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) l.weights(r, c) = u(rng);
    for (Eigen::Index r = 0; r < out; ++r) l.bias(r) = u(rng);
    const bool last = i + 1 == widths.size();
    l.activation = last ? Activation::Linear : Activation::ReLU;
    if (last) {
      l.weights *= output_scale;
      l.bias *= output_scale;
    }
    layers.push_back(std::move(l));
  }
  return DenseNetwork(widths.front(), std::move(layers));
}

TrainResult train_surrogate(const SurrogateSpec& spec) {
  spec.validate();
  TrainResult result{random_network(spec.widths, spec.seed, spec.output_scale), {}, {}};
  std::vector<int> marks = spec.checkpoints;
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  auto mark = marks.begin();
  auto keep = [&](int epoch) {
    for (; mark != marks.end() && *mark == epoch; ++mark)
      result.checkpoints.emplace_back(epoch, result.model);
  };
  keep(0);
  if (spec.epochs == 0) return result;

  const Dataset data = generate_dataset(spec, spec.n_train, 0);
  const auto n = static_cast<std::size_t>(data.inputs.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(stream_seed(spec.seed, 0x5b0ffULL));
  result.epoch_mse.reserve(static_cast<std::size_t>(spec.epochs));

  Matrix xb, yb;
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const std::size_t len = std::min(spec.batch_size, n - start);
      xb.resize(data.inputs.rows(), static_cast<Eigen::Index>(len));
      yb.resize(data.targets.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t c = 0; c < len; ++c) {
        xb.col(static_cast<Eigen::Index>(c)) = data.inputs.col(order[start + c]);
        yb.col(static_cast<Eigen::Index>(c)) = data.targets.col(order[start + c]);
      }
      try {
        sum += sgd_step(result.model, xb, yb, spec.learning_rate) * static_cast<double>(len);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    result.epoch_mse.push_back(sum / static_cast<double>(n));
    keep(epoch);
  }
  return result;
}

double mean_squared_error(const DenseNetwork& net, const Dataset& data) {
  const Matrix diff = net.forward_batch(data.inputs) - data.targets;
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

}  // namespace stabkit
