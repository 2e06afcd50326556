#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tads/matrix.hpp"
#include "tads/rng.hpp"

namespace tads {

enum class Activation : unsigned char { kIdentity = 0, kRelu = 1, kSigmoid = 2 };

double sigmoid(double x) noexcept;

struct DenseLayer {
  DenseMatrix weights;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t input_dim() const noexcept { return weights.cols(); }
  std::size_t output_dim() const noexcept { return weights.rows(); }
};

// Intermediate values of one forward pass, consumed by backward().
struct MlpTrace {
  std::vector<std::vector<double>> inputs;           // input to each layer
  std::vector<std::vector<double>> pre_activations;  // affine part of each layer
  std::vector<std::vector<double>> activations;      // output of each layer
};

struct MlpGradients {
  std::vector<double> parameters;  // flat, in Mlp::parameters() order
  std::vector<double> input;
};

// Fully connected feed-forward network. Parameters are flattened layer by
// layer as the row-major weight matrix followed by the bias.
class Mlp {
 public:
  Mlp() = default;
  // All-zero network. dims has one more entry than activations.
  Mlp(std::span<const std::size_t> dims, std::span<const Activation> activations);
  explicit Mlp(std::vector<DenseLayer> layers);

  // He-scaled normal weights for relu layers, Xavier-scaled otherwise; zero
  // biases.
  static Mlp random(std::span<const std::size_t> dims,
                    std::span<const Activation> activations, RngStream& rng);

  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;
  std::size_t parameter_count() const noexcept;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward(std::span<const double> x, MlpTrace& trace) const;

  // Accumulates dL/dparams into param_grad (which must hold
  // parameter_count() values) and returns dL/dx.
  std::vector<double> backward(const MlpTrace& trace, std::span<const double> upstream,
                               std::span<double> param_grad) const;

  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  double squared_norm() const noexcept;

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.parameters() == b.parameters() && a.parameter_count() == b.parameter_count();
  }

 private:
  std::vector<DenseLayer> layers_;
};

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> x);
MlpGradients mlp_backward(const Mlp& net, std::span<const double> x,
                          std::span<const double> upstream);

struct AdamState {
  std::size_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_parameters(std::size_t count, double learning_rate);
};

// In-place Adam update with bias correction. Throws NumericalDomain on a
// non-finite gradient (parameters and state are left untouched).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace tads
