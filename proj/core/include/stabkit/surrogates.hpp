#pragma once

#include "stabkit/network.hpp"

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

enum class TargetFunction { Rosenbrock2D, BrakingDistanceToy, RandomAffinePlusNoise };

std::string_view to_string(TargetFunction t);
TargetFunction target_function_from_string(std::string_view s);

struct SurrogateSpec {
  TargetFunction target = TargetFunction::Rosenbrock2D;
  Vector domain_lower;
  Vector domain_upper;
  /// Layer widths including input and output, e.g. {2, 16, 16, 1}.
  std::vector<std::size_t> widths;
  int epochs = 0;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::size_t n_train = 512;
  std::uint64_t seed = 0;
  /// Extra epoch counts at which a copy of the model is kept.
  std::vector<int> checkpoints;
  /// Standard deviation of the target noise (RandomAffinePlusNoise only).
  double noise = 0.01;
  /// Multiplier on the last layer's initial weights and bias.
  double output_scale = 1.0;

  void validate() const;
};

SurrogateSpec surrogate_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SurrogateSpec& spec);

/// Named presets: "rosenbrock", "braking", "random-shape".
SurrogateSpec preset_spec(std::string_view name);

double rosenbrock(double x, double y);
/// v in m/s, mu dimensionless; g = 9.81, reaction time 1 s.
double braking_distance(double v, double mu);

/// Affine maps between the raw domain/target ranges and [-1, 1].
struct Normalization {
  Vector input_lower, input_upper;
  Vector target_lower, target_upper;

  Vector normalize_input(const Vector& raw) const;
  Vector denormalize_input(const Vector& unit) const;
  Vector normalize_target(const Vector& raw) const;
};

/// Target ranges come from a fixed calibration sample, so every split of
/// the same spec shares one normalization.
Normalization normalization_for(const SurrogateSpec& spec);

struct Dataset {
  Matrix inputs;   // one normalized sample per column
  Matrix targets;  // one normalized target per column
};

/// Uniform samples over the domain, analytic targets, both mapped to
/// [-1, 1]. `stream` selects an independent sample (0 = training).
Dataset generate_dataset(const SurrogateSpec& spec, std::size_t n_points, std::uint64_t stream = 0);

/// Hidden layers ReLU, last layer Linear; weights and biases uniform in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)]. The last layer is scaled by
/// `output_scale`.
DenseNetwork random_network(const std::vector<std::size_t>& widths, std::uint64_t seed,
                            double output_scale = 1.0);

struct TrainResult {
  DenseNetwork model;
  std::vector<double> epoch_mse;  // one entry per epoch
  std::vector<std::pair<int, DenseNetwork>> checkpoints;
};

/// Minibatch SGD on the spec's training set. Throws TrainingError naming
/// the epoch if the loss becomes non-finite.
TrainResult train_surrogate(const SurrogateSpec& spec);

double mean_squared_error(const DenseNetwork& net, const Dataset& data);

}  // namespace stabkit
