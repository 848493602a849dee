#include "stabkit/network.hpp"

#include "stabkit/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <string>

namespace stabkit {

using nlohmann::json;

std::string_view to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "linear";
}

DenseNetwork::DenseNetwork(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  if (input_dim_ == 0) throw ValidationError("network: input_dim must be positive");
  if (layers_.empty()) throw ValidationError("network: at least one layer is required");
  std::size_t width = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string where = "layers[" + std::to_string(i) + "]";
    if (l.weights.rows() == 0) throw ValidationError(where + ": weights has no rows");
    if (l.weights.rows() != l.bias.size())
      throw ValidationError(where + ": weights has " + std::to_string(l.weights.rows()) +
                            " rows but bias has " + std::to_string(l.bias.size()) + " entries");
    if (l.in_dim() != width)
      throw ValidationError(where + ": weights has " + std::to_string(l.in_dim()) +
                            " columns, expected " + std::to_string(width));
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw ValidationError(where + ": non-finite parameter");
    width = l.out_dim();
  }
}

void DenseNetwork::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim_)
    throw DimensionError("forward: input has " + std::to_string(x.size()) +
                         " entries, network expects " + std::to_string(input_dim_));
}

Vector DenseNetwork::forward(const Vector& x) const {
  check_input(x);
  Vector h = x;
  for (const auto& l : layers_) {
    Vector z = l.weights * h + l.bias;
    if (l.activation == Activation::ReLU) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Matrix DenseNetwork::forward_batch(const Matrix& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim_)
    throw DimensionError("forward_batch: input rows do not match input_dim");
  Matrix h = inputs;
  for (const auto& l : layers_) {
    Matrix z = l.weights * h;
    z.colwise() += l.bias;
    if (l.activation == Activation::ReLU) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

ForwardTrace DenseNetwork::trace(const Vector& x) const {
  check_input(x);
  ForwardTrace t;
  t.pre.reserve(layers_.size());
  t.post.reserve(layers_.size());
  const Vector* h = &x;
  for (const auto& l : layers_) {
    t.pre.push_back(l.weights * *h + l.bias);
    t.post.push_back(l.activation == Activation::ReLU ? Vector(t.pre.back().cwiseMax(0.0))
                                                      : t.pre.back());
    h = &t.post.back();
  }
  return t;
}

Vector DenseNetwork::gradient(const Vector& x, std::size_t output_index, Direction sign) const {
  return value_and_gradient(x, output_index, sign).second;
}

std::pair<Vector, Vector> DenseNetwork::value_and_gradient(const Vector& x,
                                                           std::size_t output_index,
                                                           Direction sign) const {
  if (output_index >= output_dim())
    throw DimensionError("gradient: output index " + std::to_string(output_index) +
                         " out of range (k=" + std::to_string(output_dim()) + ")");
  const ForwardTrace t = trace(x);
  Vector g = Vector::Zero(static_cast<Eigen::Index>(output_dim()));
  g(static_cast<Eigen::Index>(output_index)) = sign_of(sign);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& l = layers_[i];
    if (l.activation == Activation::ReLU)
      g = (t.pre[i].array() > 0.0).select(g, 0.0);
    g = l.weights.transpose() * g;
  }
  return {t.post.back(), g};
}

double sgd_step(DenseNetwork& net, const Matrix& inputs, const Matrix& targets,
                double learning_rate) {
  const auto batch = inputs.cols();
  if (batch == 0) throw DimensionError("sgd_step: empty batch");
  if (targets.cols() != batch || static_cast<std::size_t>(targets.rows()) != net.output_dim() ||
      static_cast<std::size_t>(inputs.rows()) != net.input_dim())
    throw DimensionError("sgd_step: batch shape does not match the network");

  auto& layers = net.layers_;
  std::vector<Matrix> pre(layers.size());
  std::vector<Matrix> post(layers.size());
  const Matrix* h = &inputs;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    pre[i] = layers[i].weights * *h;
    pre[i].colwise() += layers[i].bias;
    post[i] = layers[i].activation == Activation::ReLU ? Matrix(pre[i].cwiseMax(0.0)) : pre[i];
    h = &post[i];
  }
  const Matrix residual = post.back() - targets;
  const double loss = residual.squaredNorm() / static_cast<double>(residual.size());
  if (!std::isfinite(loss)) throw TrainingError("sgd_step: non-finite loss");
  if (learning_rate == 0.0) return loss;

  // d(loss)/d(output) for loss = mean over all entries of squared error.
  Matrix delta = residual * (2.0 / static_cast<double>(residual.size()));
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (layers[i].activation == Activation::ReLU)
      delta = (pre[i].array() > 0.0).select(delta, 0.0);
    const Matrix& input = i == 0 ? inputs : post[i - 1];
    Matrix grad_w = delta * input.transpose();
    Vector grad_b = delta.rowwise().sum();
    if (i > 0) delta = layers[i].weights.transpose() * delta;
    layers[i].weights -= learning_rate * grad_w;
    layers[i].bias -= learning_rate * grad_b;
  }
  return loss;
}

namespace {

Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError(field + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ParseError(field + "[" + std::to_string(i) + "]: expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ParseError(field + ": expected a non-empty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array()) throw ParseError(field + "[0]: expected an array of numbers");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string row_field = field + "[" + std::to_string(r) + "]";
    Vector row = vector_from_json(j[r], row_field);
    if (static_cast<std::size_t>(row.size()) != cols)
      throw ParseError(row_field + ": ragged row (" + std::to_string(row.size()) +
                       " entries, expected " + std::to_string(cols) + ")");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace

DenseNetwork network_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("model: expected a JSON object");
  if (!j.contains("input_dim") || !j["input_dim"].is_number_integer() ||
      j["input_dim"].get<long long>() <= 0)
    throw ParseError("input_dim: expected a positive integer");
  if (!j.contains("layers") || !j["layers"].is_array())
    throw ParseError("layers: expected an array");
  std::vector<DenseLayer> layers;
  const auto& jl = j["layers"];
  for (std::size_t i = 0; i < jl.size(); ++i) {
    const std::string field = "layers[" + std::to_string(i) + "]";
    const auto& e = jl[i];
    if (!e.is_object()) throw ParseError(field + ": expected an object");
    if (!e.contains("weights")) throw ParseError(field + ".weights: missing");
    if (!e.contains("bias")) throw ParseError(field + ".bias: missing");
    DenseLayer layer;
    layer.weights = matrix_from_json(e["weights"], field + ".weights");
    layer.bias = vector_from_json(e["bias"], field + ".bias");
    const std::string act = e.value("activation", std::string("linear"));
    if (act == "relu") {
      layer.activation = Activation::ReLU;
    } else if (act == "linear") {
      layer.activation = Activation::Linear;
    } else {
      throw ParseError(field + ".activation: expected \"relu\" or \"linear\", got \"" + act + "\"");
    }
    layers.push_back(std::move(layer));
  }
  return DenseNetwork(j["input_dim"].get<std::size_t>(), std::move(layers));
}

json network_to_json(const DenseNetwork& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row.push_back(l.weights(r, c));
      w.push_back(std::move(row));
    }
    json b = json::array();
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) b.push_back(l.bias(r));
    layers.push_back({{"weights", std::move(w)},
                      {"bias", std::move(b)},
                      {"activation", std::string(to_string(l.activation))}});
  }
  return {{"input_dim", net.input_dim()}, {"layers", std::move(layers)}};
}

DenseNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("model: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("model: " + path.string() + ": " + e.what());
  }
  return network_from_json(j);
}

void save_network(const DenseNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  // nlohmann dumps doubles with round-trip precision.
  out << network_to_json(net).dump() << '\n';
}

}  // namespace stabkit
