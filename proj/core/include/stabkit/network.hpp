#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stabkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { ReLU, Linear };

std::string_view to_string(Activation a);

/// Sign of the objective when differentiating or attacking an output.
enum class Direction : int { Up = 1, Down = -1 };

inline double sign_of(Direction d) { return static_cast<double>(static_cast<int>(d)); }

/// One affine map followed by an elementwise activation.
/// weights has one row per output neuron.
struct DenseLayer {
  Matrix weights;
  Vector bias;
  Activation activation = Activation::Linear;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Per-layer activations recorded during a forward pass.
struct ForwardTrace {
  std::vector<Vector> pre;   // pre-activation of layer i
  std::vector<Vector> post;  // post-activation of layer i
};

class DenseNetwork {
 public:
  /// Validates shapes and finiteness; throws ValidationError naming the layer.
  DenseNetwork(std::size_t input_dim, std::vector<DenseLayer> layers);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

  Vector forward(const Vector& x) const;
  /// Columns of `inputs` are samples; returns one output column per sample.
  Matrix forward_batch(const Matrix& inputs) const;
  ForwardTrace trace(const Vector& x) const;

  /// Gradient of sign * f_i with respect to the input. ReLU'(0) is taken as 0.
  Vector gradient(const Vector& x, std::size_t output_index, Direction sign = Direction::Up) const;
  /// f(x) together with the gradient of sign * f_i, from a single pass.
  std::pair<Vector, Vector> value_and_gradient(const Vector& x, std::size_t output_index,
                                               Direction sign = Direction::Up) const;

  friend double sgd_step(DenseNetwork& net, const Matrix& inputs, const Matrix& targets,
                         double learning_rate);

 private:
  void check_input(const Vector& x) const;

  std::size_t input_dim_;
  std::vector<DenseLayer> layers_;
};

/// One plain gradient step on the mean-squared error of a batch.
/// `inputs` and `targets` hold one sample per column. Returns the loss
/// measured before the update. Throws TrainingError on a non-finite loss.
double sgd_step(DenseNetwork& net, const Matrix& inputs, const Matrix& targets,
                double learning_rate);

DenseNetwork network_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const DenseNetwork& net);
DenseNetwork load_network(const std::filesystem::path& path);
void save_network(const DenseNetwork& net, const std::filesystem::path& path);

}  // namespace stabkit
