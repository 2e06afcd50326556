#include "tads/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "tads/error.hpp"

namespace tads {
namespace {

double activate(Activation a, double x) noexcept {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

// Derivative expressed through the layer output y = act(x).
double activate_grad(Activation a, double pre, double post) noexcept {
  switch (a) {
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid: return post * (1.0 - post);
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mlp::Mlp(std::span<const std::size_t> dims, std::span<const Activation> activations) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
    throw ShapeError("mlp needs one activation per layer and at least one layer");
  }
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] == 0 || dims[l + 1] == 0) throw ShapeError("mlp layer of width 0");
    layers_.push_back(DenseLayer{DenseMatrix(dims[l + 1], dims[l]),
                                 std::vector<double>(dims[l + 1], 0.0), activations[l]});
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].output_dim()) {
      throw ShapeError("mlp bias length does not match layer output");
    }
    if (l > 0 && layers_[l].input_dim() != layers_[l - 1].output_dim()) {
      throw ShapeError("mlp layer " + std::to_string(l) + " input does not match previous output");
    }
  }
}

Mlp Mlp::random(std::span<const std::size_t> dims, std::span<const Activation> activations,
                RngStream& rng) {
  Mlp net(dims, activations);
  for (auto& layer : net.layers_) {
    const double fan_in = static_cast<double>(layer.input_dim());
    const double fan_out = static_cast<double>(layer.output_dim());
    const double scale = layer.activation == Activation::kRelu
                             ? std::sqrt(2.0 / fan_in)
                             : std::sqrt(2.0 / (fan_in + fan_out));
    for (double& w : layer.weights.data()) w = scale * rng.normal();
  }
  return net;
}

std::size_t Mlp::input_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.front().input_dim();
}

std::size_t Mlp::output_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.back().output_dim();
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.data().size() + layer.bias.size();
  return n;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  MlpTrace trace;
  return forward(x, trace);
}

std::vector<double> Mlp::forward(std::span<const double> x, MlpTrace& trace) const {
  if (x.size() != input_dim()) {
    throw ShapeError("mlp input has length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(input_dim()));
  }
  trace.inputs.clear();
  trace.pre_activations.clear();
  trace.activations.clear();
  std::vector<double> current(x.begin(), x.end());
  for (const auto& layer : layers_) {
    std::vector<double> pre(layer.output_dim());
    std::vector<double> out(layer.output_dim());
    for (std::size_t o = 0; o < out.size(); ++o) {
      pre[o] = layer.bias[o] + dot(layer.weights.row(o), current);
      out[o] = activate(layer.activation, pre[o]);
    }
    trace.inputs.push_back(std::move(current));
    trace.pre_activations.push_back(std::move(pre));
    trace.activations.push_back(out);
    current = std::move(out);
  }
  return current;
}

std::vector<double> Mlp::backward(const MlpTrace& trace, std::span<const double> upstream,
                                  std::span<double> param_grad) const {
  if (upstream.size() != output_dim()) throw ShapeError("mlp upstream gradient length");
  if (param_grad.size() != parameter_count()) throw ShapeError("mlp parameter gradient length");
  if (trace.inputs.size() != layers_.size()) throw ShapeError("mlp trace does not match net");

  // Offsets of each layer inside the flat parameter vector.
  std::vector<std::size_t> offsets(layers_.size(), 0);
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    offsets[l] = offsets[l - 1] + layers_[l - 1].weights.data().size() + layers_[l - 1].bias.size();
  }

  std::vector<double> grad(upstream.begin(), upstream.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const DenseLayer& layer = layers_[l];
    const auto& input = trace.inputs[l];
    const auto& pre = trace.pre_activations[l];
    const auto& output = trace.activations[l];
    std::vector<double> delta(layer.output_dim());
    for (std::size_t o = 0; o < delta.size(); ++o) {
      delta[o] = grad[o] * activate_grad(layer.activation, pre[o], output[o]);
    }
    double* w_grad = param_grad.data() + offsets[l];
    double* b_grad = w_grad + layer.weights.data().size();
    std::vector<double> input_grad(layer.input_dim(), 0.0);
    for (std::size_t o = 0; o < delta.size(); ++o) {
      if (delta[o] == 0.0) continue;
      const auto w_row = layer.weights.row(o);
      for (std::size_t i = 0; i < input.size(); ++i) {
        w_grad[o * input.size() + i] += delta[o] * input[i];
        input_grad[i] += delta[o] * w_row[i];
      }
      b_grad[o] += delta[o];
    }
    grad = std::move(input_grad);
  }
  return grad;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    flat.insert(flat.end(), layer.weights.data().begin(), layer.weights.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("mlp parameter vector length");
  std::size_t pos = 0;
  for (auto& layer : layers_) {
    auto w = layer.weights.data();
    std::copy_n(flat.begin() + pos, w.size(), w.begin());
    pos += w.size();
    std::copy_n(flat.begin() + pos, layer.bias.size(), layer.bias.begin());
    pos += layer.bias.size();
  }
}

double Mlp::squared_norm() const noexcept {
  double sum = 0.0;
  for (const auto& layer : layers_) {
    for (double w : layer.weights.data()) sum += w * w;
    for (double b : layer.bias) sum += b * b;
  }
  return sum;
}

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> x) {
  return net.forward(x);
}

MlpGradients mlp_backward(const Mlp& net, std::span<const double> x,
                          std::span<const double> upstream) {
  MlpTrace trace;
  net.forward(x, trace);
  MlpGradients grads;
  grads.parameters.assign(net.parameter_count(), 0.0);
  grads.input = net.backward(trace, upstream, grads.parameters);
  return grads;
}

AdamState AdamState::for_parameters(std::size_t count, double learning_rate) {
  AdamState state;
  state.first_moment.assign(count, 0.0);
  state.second_moment.assign(count, 0.0);
  state.learning_rate = learning_rate;
  return state;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam: parameter, gradient and moment lengths differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericalDomain("adam: non-finite gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace tads
