#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "macflow/autodiff.hpp"
#include "macflow/rng.hpp"
#include "macflow/tensor.hpp"

namespace macflow {

enum class Activation { gelu, relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

inline constexpr double kLayerNormEps = 1e-10;

struct MlpArchitecture {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t output = 0;
  bool layer_norm = true;
  Activation activation = Activation::gelu;

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

// One affine layer. Hidden layers carry layer-norm gain/offset rows when the
// network has layer norm enabled; the output layer never does.
struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Tensor ln_gain;
  Tensor ln_offset;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Weights of a multilayer perceptron:
//   hidden: h = LN(act(h W + b)),  output: y = h W + b.
class MlpParams {
 public:
  MlpParams() = default;

  // Kaiming-uniform fan-in weights, zero biases, unit layer-norm gains.
  static MlpParams init(const MlpArchitecture& arch, Rng& rng);
  // Zero weights and biases; layer-norm gains are 1 so the net is a valid
  // (constant-zero) function.
  static MlpParams zeros(const MlpArchitecture& arch);
  static MlpParams from_layers(const MlpArchitecture& arch, std::vector<DenseLayer> layers);

  const MlpArchitecture& architecture() const { return arch_; }
  std::size_t input_dim() const { return arch_.input; }
  std::size_t output_dim() const { return arch_.output; }
  bool layer_norm() const { return arch_.layer_norm; }

  std::size_t layer_count() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  // Mutable access to values; shapes are checked again by every consumer.
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }

  // Same structure, every entry 0 (gradient and optimizer-moment containers).
  MlpParams zeros_like() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  // Throws if layer shapes do not chain from input to output.
  void validate() const;
  bool same_structure(const MlpParams& other) const;

  // Visits weight, bias, [ln_gain, ln_offset] of each layer in order.
  template <class F>
  void for_each_tensor(F&& f) {
    for (DenseLayer& l : layers_) {
      f(l.weight);
      f(l.bias);
      if (!l.ln_gain.empty()) {
        f(l.ln_gain);
        f(l.ln_offset);
      }
    }
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    for (const DenseLayer& l : layers_) {
      f(l.weight);
      f(l.bias);
      if (!l.ln_gain.empty()) {
        f(l.ln_gain);
        f(l.ln_offset);
      }
    }
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;

 private:
  MlpArchitecture arch_;
  std::vector<DenseLayer> layers_;
};

// Elementwise combination of two identically-shaped parameter sets.
MlpParams zip_params(const MlpParams& a, const MlpParams& b,
                     const std::function<double(double, double)>& f);

// Inference path, no tape. Batched over rows of `input`.
Tensor mlp_forward(const MlpParams& params, const Tensor& input);

// Parameters placed on a tape, either as trainable leaves or as constants
// (the latter blocks gradients into the network but not through it).
struct BoundMlp {
  const MlpParams* params = nullptr;
  std::vector<Var> tensors;
  bool trainable = false;
};

BoundMlp bind(Tape& tape, const MlpParams& params, bool trainable);
Var mlp_apply(const BoundMlp& net, Var input);
// Gradient of the last backward() with respect to a bound network.
MlpParams gradient_of(const Tape& tape, const BoundMlp& net);

// Reverse-mode gradient of a scalar loss built on a fresh tape.
MlpParams grad(const std::function<Var(Tape&, const BoundMlp&)>& loss_fn,
               const MlpParams& params);

}  // namespace macflow
