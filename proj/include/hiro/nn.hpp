#pragma once

#include "hiro/common.hpp"
#include "hiro/rng.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace hiro::nn {

enum class OutputTransform { identity, tanh_scaled };

/// Feed-forward network with tanh hidden layers. Samples are columns.
/// weights[i] has shape (layer_sizes[i+1], layer_sizes[i]).
struct Mlp {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  OutputTransform output_transform = OutputTransform::identity;
  // Declared output range; only read when output_transform is tanh_scaled.
  Vector output_low;
  Vector output_high;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
    return n;
  }
};

// Gradient (or moment) storage congruent with an Mlp's parameters.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static MlpGradients zeros_like(const Mlp& net) {
    MlpGradients g;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
      g.weights.push_back(Matrix::Zero(net.weights[i].rows(), net.weights[i].cols()));
      g.biases.push_back(Vector::Zero(net.biases[i].size()));
    }
    return g;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  MlpGradients& operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
  }
};

namespace detail {

// tanh outputs are pulled inside (-1, 1) so scaled outputs never touch the range bounds.
inline constexpr double kTanhLimit = 1.0 - 1e-12;

// Vectorized through exp; absolute error around 1e-16.
inline Matrix tanh(const Matrix& z) { return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix(); }

inline void check_congruent(const Mlp& a, const Mlp& b, const char* what) {
  if (a.layer_sizes != b.layer_sizes) throw std::invalid_argument(std::string(what) + ": layer sizes differ");
}

inline void check_congruent(const Mlp& net, const MlpGradients& g, const char* what) {
  if (g.weights.size() != net.num_layers() || g.biases.size() != net.num_layers())
    throw std::invalid_argument(std::string(what) + ": layer count mismatch");
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    if (g.weights[i].rows() != net.weights[i].rows() || g.weights[i].cols() != net.weights[i].cols() ||
        g.biases[i].size() != net.biases[i].size())
      throw std::invalid_argument(std::string(what) + ": parameter shape mismatch at layer " + std::to_string(i));
  }
}

}  // namespace detail

/// Builds a network initialized uniformly in +-1/sqrt(fan_in).
inline Mlp make_mlp(std::vector<std::size_t> layer_sizes, OutputTransform transform, Rng& rng,
                    Vector output_low = {}, Vector output_high = {}) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output sizes");
  for (auto n : layer_sizes)
    if (n == 0) throw std::invalid_argument("make_mlp: zero-width layer");
  Mlp net;
  net.layer_sizes = std::move(layer_sizes);
  net.output_transform = transform;
  if (transform == OutputTransform::tanh_scaled) {
    const auto out = static_cast<Eigen::Index>(net.output_size());
    if (output_low.size() != out || output_high.size() != out)
      throw std::invalid_argument("make_mlp: output range has wrong length");
    if ((output_high.array() <= output_low.array()).any())
      throw std::invalid_argument("make_mlp: empty output range");
    net.output_low = std::move(output_low);
    net.output_high = std::move(output_high);
  }
  for (std::size_t i = 0; i + 1 < net.layer_sizes.size(); ++i) {
    const auto fan_in = static_cast<Eigen::Index>(net.layer_sizes[i]);
    const auto fan_out = static_cast<Eigen::Index>(net.layer_sizes[i + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
    Vector b(fan_out);
    for (Eigen::Index r = 0; r < fan_out; ++r) b[r] = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

// Intermediate values of a batched forward pass, needed by backward.
struct Tape {
  std::vector<Matrix> activations;  // activations[0] is the input, then each hidden layer post-tanh
  Matrix output_tanh;               // tanh of the final pre-activation (tanh_scaled only)
};

inline Matrix forward_batch(const Mlp& net, const Matrix& inputs, Tape* tape = nullptr) {
  if (static_cast<std::size_t>(inputs.rows()) != net.input_size())
    throw std::invalid_argument("forward: input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                                std::to_string(net.input_size()));
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(inputs);
  }
  Matrix x = inputs;
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    Matrix z = net.weights[i] * x;
    z.colwise() += net.biases[i];
    x = detail::tanh(z);
    if (tape) tape->activations.push_back(x);
  }
  Matrix z = net.weights[last] * x;
  z.colwise() += net.biases[last];
  if (net.output_transform == OutputTransform::identity) return z;

  Matrix t = detail::tanh(z).cwiseMax(-detail::kTanhLimit).cwiseMin(detail::kTanhLimit).matrix();
  const Vector center = 0.5 * (net.output_high + net.output_low);
  const Vector half = 0.5 * (net.output_high - net.output_low);
  Matrix out = (t.array().colwise() * half.array()).matrix();
  out.colwise() += center;
  if (tape) tape->output_tanh = std::move(t);
  return out;
}

inline Vector forward(const Mlp& net, const Vector& input) {
  Matrix out = forward_batch(net, Matrix(input));
  return out.col(0);
}

/// Gradients summed over the batch columns. When input_gradient is given it
/// receives d(loss)/d(inputs), same shape as the tape input.
inline MlpGradients backward_batch(const Mlp& net, const Tape& tape, const Matrix& output_gradient,
                                   Matrix* input_gradient = nullptr) {
  if (tape.activations.size() != net.num_layers())
    throw std::invalid_argument("backward: tape does not match network depth");
  const Eigen::Index batch = tape.activations.front().cols();
  if (static_cast<std::size_t>(output_gradient.rows()) != net.output_size() || output_gradient.cols() != batch)
    throw std::invalid_argument("backward: output gradient shape mismatch");

  MlpGradients grads;
  grads.weights.resize(net.num_layers());
  grads.biases.resize(net.num_layers());

  Matrix delta;
  if (net.output_transform == OutputTransform::identity) {
    delta = output_gradient;
  } else {
    const Vector half = 0.5 * (net.output_high - net.output_low);
    const auto& t = tape.output_tanh;
    delta = (output_gradient.array().colwise() * half.array() * (1.0 - t.array().square())).matrix();
  }

  for (std::size_t layer = net.num_layers(); layer-- > 0;) {
    const Matrix& x = tape.activations[layer];
    grads.weights[layer].noalias() = delta * x.transpose();
    grads.biases[layer] = delta.rowwise().sum();
    if (layer == 0 && input_gradient == nullptr) break;
    Matrix upstream = net.weights[layer].transpose() * delta;
    if (layer == 0) {
      *input_gradient = std::move(upstream);
    } else {
      delta = (upstream.array() * (1.0 - x.array().square())).matrix();
    }
  }
  return grads;
}

/// Single-sample backward: returns parameter gradients and the input gradient.
inline std::pair<MlpGradients, Vector> backward(const Mlp& net, const Vector& input, const Vector& output_gradient) {
  if (static_cast<std::size_t>(output_gradient.size()) != net.output_size())
    throw std::invalid_argument("backward: output gradient has wrong length");
  Tape tape;
  forward_batch(net, Matrix(input), &tape);
  Matrix dx;
  auto grads = backward_batch(net, tape, Matrix(output_gradient), &dx);
  return {std::move(grads), Vector(dx.col(0))};
}

struct AdamState {
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  MlpGradients first_moment;
  MlpGradients second_moment;

  static AdamState for_network(const Mlp& net, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.first_moment = MlpGradients::zeros_like(net);
    s.second_moment = MlpGradients::zeros_like(net);
    return s;
  }
};

/// Descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(AdamState& state, Mlp& net, const MlpGradients& grads) {
  detail::check_congruent(net, grads, "adam_step");
  detail::check_congruent(net, state.first_moment, "adam_step");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double lr = state.learning_rate;
  const double eps = state.epsilon;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m.array() = b1 * m.array() + (1.0 - b1) * g.array();
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    param.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    update(net.weights[i], state.first_moment.weights[i], state.second_moment.weights[i], grads.weights[i]);
    update(net.biases[i], state.first_moment.biases[i], state.second_moment.biases[i], grads.biases[i]);
  }
}

/// target <- (1 - tau) * target + tau * online
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  detail::check_congruent(target, online, "soft_update");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  for (std::size_t i = 0; i < target.num_layers(); ++i) {
    target.weights[i] = (1.0 - tau) * target.weights[i] + tau * online.weights[i];
    target.biases[i] = (1.0 - tau) * target.biases[i] + tau * online.biases[i];
  }
}

// Largest absolute parameter difference between two congruent networks.
inline double max_abs_difference(const Mlp& a, const Mlp& b) {
  detail::check_congruent(a, b, "max_abs_difference");
  double d = 0.0;
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    d = std::max(d, (a.weights[i] - b.weights[i]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.biases[i] - b.biases[i]).cwiseAbs().maxCoeff());
  }
  return d;
}

inline bool identical(const Mlp& a, const Mlp& b) {
  if (a.layer_sizes != b.layer_sizes) return false;
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    if (a.weights[i] != b.weights[i] || a.biases[i] != b.biases[i]) return false;
  }
  return true;
}

inline void write_mlp(std::ostream& os, const Mlp& net) {
  binio::write_u64(os, net.layer_sizes.size());
  for (auto n : net.layer_sizes) binio::write_u64(os, n);
  binio::write_u64(os, net.output_transform == OutputTransform::tanh_scaled ? 1 : 0);
  binio::write_vector(os, net.output_low);
  binio::write_vector(os, net.output_high);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    binio::write_matrix(os, net.weights[i]);
    binio::write_vector(os, net.biases[i]);
  }
}

inline Mlp read_mlp(std::istream& is) {
  Mlp net;
  const auto depth = binio::read_u64(is);
  if (depth < 2 || depth > 64) throw FormatError("mlp depth out of range");
  for (std::uint64_t i = 0; i < depth; ++i) net.layer_sizes.push_back(binio::read_u64(is));
  net.output_transform = binio::read_u64(is) == 1 ? OutputTransform::tanh_scaled : OutputTransform::identity;
  net.output_low = binio::read_vector(is);
  net.output_high = binio::read_vector(is);
  for (std::size_t i = 0; i + 1 < net.layer_sizes.size(); ++i) {
    net.weights.push_back(binio::read_matrix(is));
    net.biases.push_back(binio::read_vector(is));
    if (static_cast<std::size_t>(net.weights.back().rows()) != net.layer_sizes[i + 1] ||
        static_cast<std::size_t>(net.weights.back().cols()) != net.layer_sizes[i])
      throw FormatError("mlp weight shape disagrees with layer sizes");
  }
  return net;
}

inline void write_gradients(std::ostream& os, const MlpGradients& g) {
  binio::write_u64(os, g.weights.size());
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    binio::write_matrix(os, g.weights[i]);
    binio::write_vector(os, g.biases[i]);
  }
}

inline MlpGradients read_gradients(std::istream& is) {
  MlpGradients g;
  const auto n = binio::read_u64(is);
  if (n > 64) throw FormatError("gradient layer count out of range");
  for (std::uint64_t i = 0; i < n; ++i) {
    g.weights.push_back(binio::read_matrix(is));
    g.biases.push_back(binio::read_vector(is));
  }
  return g;
}

inline void write_adam(std::ostream& os, const AdamState& s) {
  binio::write_u64(os, s.step_count);
  binio::write_f64(os, s.learning_rate);
  binio::write_f64(os, s.beta1);
  binio::write_f64(os, s.beta2);
  binio::write_f64(os, s.epsilon);
  write_gradients(os, s.first_moment);
  write_gradients(os, s.second_moment);
}

inline AdamState read_adam(std::istream& is) {
  AdamState s;
  s.step_count = binio::read_u64(is);
  s.learning_rate = binio::read_f64(is);
  s.beta1 = binio::read_f64(is);
  s.beta2 = binio::read_f64(is);
  s.epsilon = binio::read_f64(is);
  s.first_moment = read_gradients(is);
  s.second_moment = read_gradients(is);
  return s;
}

}  // namespace hiro::nn
