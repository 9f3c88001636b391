#ifndef DQS_NN_HPP
#define DQS_NN_HPP

// Dense three-layer networks (input -> hidden -> output) over flat parameter
// vectors, with batched reverse-mode gradients, Adam and Polyak averaging.
//
// Parameter layout, layer by layer: W1 (hidden x input, column-major), b1,
// W2 (output x hidden, column-major), b2.

#include <Eigen/Core>

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

#include "dqs/random.hpp"

namespace dqs::nn {

enum class Activation : std::uint32_t { relu = 0, tanh = 1, identity = 2 };
enum class OutputActivation : std::uint32_t { none = 0, bounded = 1 };

using ParameterVector = Eigen::VectorXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int layer, const std::string& what)
      : std::runtime_error("non-finite value in layer " + std::to_string(layer) + ": " + what),
        layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

struct NetworkShape {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t output_dim = 1;
  Activation hidden_activation = Activation::relu;
  OutputActivation output_activation = OutputActivation::none;

  /// Input, hidden and output layer.
  static constexpr std::size_t layer_count = 3;

  std::size_t first_weights_size() const { return hidden_dim * input_dim; }
  std::size_t second_weights_offset() const { return first_weights_size() + hidden_dim; }
  std::size_t second_weights_size() const { return output_dim * hidden_dim; }
  std::size_t parameter_count() const {
    return second_weights_offset() + second_weights_size() + output_dim;
  }

  void validate() const {
    if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
      throw DimensionError("network dimensions must be >= 1");
    }
  }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

// Parameter views. Layer index is 1 or 2.

inline Eigen::Map<const Eigen::MatrixXd> weights(const NetworkShape& s, const ParameterVector& p,
                                                 int layer) {
  if (layer == 1) return {p.data(), Eigen::Index(s.hidden_dim), Eigen::Index(s.input_dim)};
  return {p.data() + s.second_weights_offset(), Eigen::Index(s.output_dim),
          Eigen::Index(s.hidden_dim)};
}

inline Eigen::Map<Eigen::MatrixXd> weights(const NetworkShape& s, ParameterVector& p, int layer) {
  if (layer == 1) return {p.data(), Eigen::Index(s.hidden_dim), Eigen::Index(s.input_dim)};
  return {p.data() + s.second_weights_offset(), Eigen::Index(s.output_dim),
          Eigen::Index(s.hidden_dim)};
}

inline Eigen::Map<const Eigen::VectorXd> biases(const NetworkShape& s, const ParameterVector& p,
                                                int layer) {
  if (layer == 1) return {p.data() + s.first_weights_size(), Eigen::Index(s.hidden_dim)};
  return {p.data() + s.second_weights_offset() + s.second_weights_size(),
          Eigen::Index(s.output_dim)};
}

inline Eigen::Map<Eigen::VectorXd> biases(const NetworkShape& s, ParameterVector& p, int layer) {
  if (layer == 1) return {p.data() + s.first_weights_size(), Eigen::Index(s.hidden_dim)};
  return {p.data() + s.second_weights_offset() + s.second_weights_size(),
          Eigen::Index(s.output_dim)};
}

/// Activations kept for the backward pass. One column per sample.
struct ForwardCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd hidden_pre;
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd output;  // post-activation
};

namespace detail {

// Vectorised replacement for DenseBase::allFinite.
template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return true;
  return std::isfinite(m.cwiseAbs().template maxCoeff<Eigen::PropagateNaN>());
}

inline void check_parameters(const NetworkShape& shape, const ParameterVector& params) {
  shape.validate();
  if (static_cast<std::size_t>(params.size()) != shape.parameter_count()) {
    throw DimensionError("parameter vector has " + std::to_string(params.size()) +
                         " entries, shape needs " + std::to_string(shape.parameter_count()));
  }
}

inline void apply_hidden(Activation act, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  switch (act) {
    case Activation::relu: out = pre.cwiseMax(0.0); break;
    case Activation::tanh: out = pre.array().tanh().matrix(); break;
    case Activation::identity: out = pre; break;
  }
}

// Multiplies the upstream gradient in place by the activation derivative.
inline void hidden_derivative(Activation act, const Eigen::MatrixXd& pre,
                              const Eigen::MatrixXd& post, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::relu: {
      const double* p = pre.data();
      double* g = grad.data();
      for (Eigen::Index k = 0; k < grad.size(); ++k) g[k] = p[k] > 0.0 ? g[k] : 0.0;
      break;
    }
    case Activation::tanh: grad.array() *= 1.0 - post.array().square(); break;
    case Activation::identity: break;
  }
}

}  // namespace detail

/// Batched forward pass; `inputs` holds one sample per column.
inline Eigen::MatrixXd forward_batch(const NetworkShape& shape, const ParameterVector& params,
                                     const Eigen::MatrixXd& inputs, ForwardCache* cache = nullptr) {
  detail::check_parameters(shape, params);
  if (static_cast<std::size_t>(inputs.rows()) != shape.input_dim) {
    throw DimensionError("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                         std::to_string(shape.input_dim));
  }
  Eigen::MatrixXd hidden_pre = weights(shape, params, 1) * inputs;
  hidden_pre.colwise() += biases(shape, params, 1);
  Eigen::MatrixXd hidden;
  detail::apply_hidden(shape.hidden_activation, hidden_pre, hidden);

  Eigen::MatrixXd output = weights(shape, params, 2) * hidden;
  output.colwise() += biases(shape, params, 2);
  if (shape.output_activation == OutputActivation::bounded) output = output.array().tanh().matrix();

  if (cache != nullptr) {
    cache->input = inputs;
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
    cache->output = output;
  }
  return output;
}

/// Batched reverse pass from a cache produced by forward_batch. Either output
/// pointer may be null to skip that gradient. Parameter gradients are summed
/// over the batch.
inline void backward_batch(const NetworkShape& shape, const ParameterVector& params,
                           const ForwardCache& cache, const Eigen::MatrixXd& output_gradient,
                           ParameterVector* param_gradient, Eigen::MatrixXd* input_gradient) {
  detail::check_parameters(shape, params);
  if (static_cast<std::size_t>(output_gradient.rows()) != shape.output_dim ||
      output_gradient.cols() != cache.output.cols()) {
    throw DimensionError("output gradient shape does not match forward cache");
  }
  if (!detail::all_finite(output_gradient)) throw NonFiniteError(2, "upstream gradient");
  if (!detail::all_finite(cache.output)) throw NonFiniteError(2, "output activation");

  Eigen::MatrixXd out_delta = output_gradient;
  if (shape.output_activation == OutputActivation::bounded) {
    out_delta.array() *= 1.0 - cache.output.array().square();
  }

  if (param_gradient != nullptr) {
    param_gradient->resize(Eigen::Index(shape.parameter_count()));
    weights(shape, *param_gradient, 2).noalias() = out_delta * cache.hidden.transpose();
    biases(shape, *param_gradient, 2) = out_delta.rowwise().sum();
  }

  const auto w2 = weights(shape, params, 2);
  Eigen::MatrixXd hidden_delta(w2.cols(), out_delta.cols());
  if (w2.rows() <= 8) {
    // Narrow output layers: column-wise axpy beats a rank-k GEMM.
    for (Eigen::Index j = 0; j < out_delta.cols(); ++j) {
      hidden_delta.col(j) = w2.row(0).transpose() * out_delta(0, j);
      for (Eigen::Index k = 1; k < w2.rows(); ++k) {
        hidden_delta.col(j) += w2.row(k).transpose() * out_delta(k, j);
      }
    }
  } else {
    hidden_delta.noalias() = w2.transpose() * out_delta;
  }
  detail::hidden_derivative(shape.hidden_activation, cache.hidden_pre, cache.hidden, hidden_delta);
  if (!detail::all_finite(hidden_delta) || !detail::all_finite(cache.hidden)) {
    throw NonFiniteError(1, "hidden activation or gradient");
  }

  if (param_gradient != nullptr) {
    weights(shape, *param_gradient, 1).noalias() = hidden_delta * cache.input.transpose();
    biases(shape, *param_gradient, 1) = hidden_delta.rowwise().sum();
  }
  if (input_gradient != nullptr) {
    input_gradient->noalias() = weights(shape, params, 1).transpose() * hidden_delta;
    if (!detail::all_finite(*input_gradient)) throw NonFiniteError(0, "input gradient");
  }
}

inline Eigen::VectorXd forward(const NetworkShape& shape, const ParameterVector& params,
                               const Eigen::VectorXd& input) {
  return forward_batch(shape, params, input);
}

struct BackwardResult {
  ParameterVector param_gradient;
  Eigen::VectorXd input_gradient;
};

inline BackwardResult backward(const NetworkShape& shape, const ParameterVector& params,
                               const Eigen::VectorXd& input,
                               const Eigen::VectorXd& output_gradient) {
  ForwardCache cache;
  forward_batch(shape, params, input, &cache);
  BackwardResult result;
  Eigen::MatrixXd input_grad;
  backward_batch(shape, params, cache, output_gradient, &result.param_gradient, &input_grad);
  result.input_gradient = input_grad.col(0);
  return result;
}

/// Uniform in +-1/sqrt(fan_in) for weights and biases of each layer.
inline ParameterVector init_parameters(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  ParameterVector params(Eigen::Index(shape.parameter_count()));
  Rng rng{seed};
  auto fill = [&rng](auto&& block, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = dist(rng);
  };
  fill(weights(shape, params, 1), shape.input_dim);
  fill(biases(shape, params, 1), shape.input_dim);
  fill(weights(shape, params, 2), shape.hidden_dim);
  fill(biases(shape, params, 2), shape.hidden_dim);
  return params;
}

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;

  static AdamState zeros(std::size_t size, double learning_rate) {
    AdamState state;
    state.first_moment = Eigen::VectorXd::Zero(Eigen::Index(size));
    state.second_moment = Eigen::VectorXd::Zero(Eigen::Index(size));
    state.learning_rate = learning_rate;
    return state;
  }
};

/// One bias-corrected Adam descent step, in place.
inline void adam_step(ParameterVector& params, const Eigen::VectorXd& gradient, AdamState& state) {
  if (params.size() != gradient.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lengths differ");
  }
  ++state.step_count;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / correction1) /
                    ((state.second_moment.array() / correction2).sqrt() + state.epsilon);
}

inline ParameterVector polyak_update(const ParameterVector& target, const ParameterVector& online,
                                     double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("polyak_update: tau must lie in [0, 1], got " +
                                std::to_string(tau));
  }
  if (target.size() != online.size()) throw DimensionError("polyak_update: lengths differ");
  return tau * online + (1.0 - tau) * target;
}

// Checkpoint format: six little-endian u32 header words (layer_count,
// input_dim, hidden_dim, output_dim, hidden_activation, output_activation)
// followed by the parameters as little-endian IEEE-754 doubles.

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                         char((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw std::runtime_error("checkpoint truncated in header");
  }
  return std::uint32_t(bytes[0]) | std::uint32_t(bytes[1]) << 8 | std::uint32_t(bytes[2]) << 16 |
         std::uint32_t(bytes[3]) << 24;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const NetworkShape& shape,
                            const ParameterVector& params) {
  detail::check_parameters(shape, params);
  detail::write_u32(out, std::uint32_t(NetworkShape::layer_count));
  detail::write_u32(out, std::uint32_t(shape.input_dim));
  detail::write_u32(out, std::uint32_t(shape.hidden_dim));
  detail::write_u32(out, std::uint32_t(shape.output_dim));
  detail::write_u32(out, std::uint32_t(shape.hidden_activation));
  detail::write_u32(out, std::uint32_t(shape.output_activation));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(params[i]);
    detail::write_u32(out, std::uint32_t(bits & 0xffffffffULL));
    detail::write_u32(out, std::uint32_t(bits >> 32));
  }
}

inline std::pair<NetworkShape, ParameterVector> load_checkpoint(std::istream& in) {
  if (detail::read_u32(in) != NetworkShape::layer_count) {
    throw std::runtime_error("checkpoint layer count is not 3");
  }
  NetworkShape shape;
  shape.input_dim = detail::read_u32(in);
  shape.hidden_dim = detail::read_u32(in);
  shape.output_dim = detail::read_u32(in);
  const auto hidden = detail::read_u32(in);
  const auto output = detail::read_u32(in);
  if (hidden > 2 || output > 1) throw std::runtime_error("checkpoint has unknown activation code");
  shape.hidden_activation = static_cast<Activation>(hidden);
  shape.output_activation = static_cast<OutputActivation>(output);
  shape.validate();
  ParameterVector params(Eigen::Index(shape.parameter_count()));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const std::uint64_t lo = detail::read_u32(in);
    const std::uint64_t hi = detail::read_u32(in);
    params[i] = std::bit_cast<double>(lo | (hi << 32));
  }
  return {shape, std::move(params)};
}

}  // namespace dqs::nn

#endif  // DQS_NN_HPP
