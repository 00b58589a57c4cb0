#include "macflow/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "macflow/kernels.hpp"

namespace macflow {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::gelu: return "gelu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "gelu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

namespace {

std::vector<std::size_t> layer_widths(const MlpArchitecture& arch) {
  std::vector<std::size_t> w{arch.input};
  w.insert(w.end(), arch.hidden.begin(), arch.hidden.end());
  w.push_back(arch.output);
  return w;
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::gelu: return gelu_value(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::gelu: return ad::gelu(x);
    case Activation::relu: return ad::relu(x);
    case Activation::tanh: return ad::tanh(x);
  }
  return x;
}

}  // namespace

MlpParams MlpParams::zeros(const MlpArchitecture& arch) {
  if (arch.input == 0 || arch.output == 0) throw std::invalid_argument("MLP dimensions must be positive");
  const auto widths = layer_widths(arch);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer l{Tensor(widths[i], widths[i + 1]), Tensor(1, widths[i + 1]), {}, {}};
    const bool hidden = i + 2 < widths.size();
    if (hidden && arch.layer_norm) {
      l.ln_gain = Tensor(1, widths[i + 1], 1.0);
      l.ln_offset = Tensor(1, widths[i + 1]);
    }
    layers.push_back(std::move(l));
  }
  return from_layers(arch, std::move(layers));
}

MlpParams MlpParams::init(const MlpArchitecture& arch, Rng& rng) {
  MlpParams p = zeros(arch);
  for (std::size_t i = 0; i < p.layers_.size(); ++i) {
    Tensor& w = p.layers_[i].weight;
    const double fan_in = static_cast<double>(w.rows());
    const bool output = i + 1 == p.layers_.size();
    const double bound = output ? std::sqrt(1.0 / fan_in) : std::sqrt(6.0 / fan_in);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
  }
  return p;
}

MlpParams MlpParams::from_layers(const MlpArchitecture& arch, std::vector<DenseLayer> layers) {
  MlpParams p;
  p.arch_ = arch;
  p.layers_ = std::move(layers);
  p.validate();
  return p;
}

void MlpParams::validate() const {
  const auto widths = layer_widths(arch_);
  if (layers_.size() + 1 != widths.size()) {
    throw std::invalid_argument("MLP has " + std::to_string(layers_.size()) + " layers, expected " +
                                std::to_string(widths.size() - 1));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    const std::string where = "layer " + std::to_string(i);
    if (l.weight.rows() != widths[i] || l.weight.cols() != widths[i + 1]) {
      throw std::invalid_argument(where + " weight shape " + l.weight.shape_string() +
                                  ", expected [" + std::to_string(widths[i]) + "," +
                                  std::to_string(widths[i + 1]) + "]");
    }
    if (l.bias.size() != widths[i + 1]) throw std::invalid_argument(where + " bias width mismatch");
    const bool hidden = i + 1 < layers_.size();
    const bool want_ln = hidden && arch_.layer_norm;
    if (want_ln != !l.ln_gain.empty() || l.ln_gain.size() != l.ln_offset.size() ||
        (want_ln && l.ln_gain.size() != widths[i + 1])) {
      throw std::invalid_argument(where + " layer-norm parameters inconsistent with architecture");
    }
  }
}

MlpParams MlpParams::zeros_like() const {
  MlpParams p = zeros(arch_);
  p.for_each_tensor([](Tensor& t) { t.fill(0.0); });
  return p;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const Tensor& t) { n += t.size(); });
  return n;
}

bool MlpParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

bool MlpParams::same_structure(const MlpParams& other) const {
  if (!(arch_ == other.arch_) || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& a = layers_[i];
    const DenseLayer& b = other.layers_[i];
    if (!a.weight.same_shape(b.weight) || !a.bias.same_shape(b.bias) ||
        !a.ln_gain.same_shape(b.ln_gain) || !a.ln_offset.same_shape(b.ln_offset)) {
      return false;
    }
  }
  return true;
}

MlpParams zip_params(const MlpParams& a, const MlpParams& b,
                     const std::function<double(double, double)>& f) {
  if (!a.same_structure(b)) throw std::invalid_argument("parameter sets have different shapes");
  MlpParams out = a;
  std::vector<const Tensor*> rhs;
  b.for_each_tensor([&](const Tensor& t) { rhs.push_back(&t); });
  std::size_t k = 0;
  out.for_each_tensor([&](Tensor& t) {
    const Tensor& r = *rhs[k++];
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f(t[i], r[i]);
  });
  return out;
}

Tensor mlp_forward(const MlpParams& params, const Tensor& input) {
  if (input.cols() != params.input_dim()) {
    throw std::invalid_argument("mlp_forward: expected input dimension " +
                                std::to_string(params.input_dim()) + ", got " +
                                std::to_string(input.cols()));
  }
  const std::size_t n = input.rows();
  const Activation act = params.architecture().activation;
  Tensor h = input;
  for (std::size_t li = 0; li < params.layer_count(); ++li) {
    const DenseLayer& l = params.layer(li);
    const std::size_t k = l.weight.rows(), m = l.weight.cols();
    Tensor out(n, m);
    kernels::gemm(h.data(), l.weight.data(), out.data(), n, k, m);
    const bool hidden = li + 1 < params.layer_count();
    for (std::size_t r = 0; r < n; ++r) {
      double* row = out.data() + r * m;
      for (std::size_t c = 0; c < m; ++c) row[c] += l.bias[c];
      if (!hidden) continue;
      for (std::size_t c = 0; c < m; ++c) row[c] = activate(act, row[c]);
      if (l.ln_gain.empty()) continue;
      // Same arithmetic sequence as ad::normalize_rows / mul_row / add_row.
      double mu = 0.0;
      for (std::size_t c = 0; c < m; ++c) mu += row[c];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t c = 0; c < m; ++c) var += (row[c] - mu) * (row[c] - mu);
      var /= static_cast<double>(m);
      const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      for (std::size_t c = 0; c < m; ++c) {
        double y = (row[c] - mu) * inv_std;
        y *= l.ln_gain[c];
        y += l.ln_offset[c];
        row[c] = y;
      }
    }
    h = std::move(out);
  }
  return h;
}

BoundMlp bind(Tape& tape, const MlpParams& params, bool trainable) {
  BoundMlp b;
  b.params = &params;
  b.trainable = trainable;
  params.for_each_tensor([&](const Tensor& t) {
    b.tensors.push_back(trainable ? tape.parameter(t) : tape.constant(t));
  });
  return b;
}

Var mlp_apply(const BoundMlp& net, Var input) {
  const MlpParams& p = *net.params;
  if (input.value().cols() != p.input_dim()) {
    throw std::invalid_argument("mlp_apply: expected input dimension " +
                                std::to_string(p.input_dim()) + ", got " +
                                std::to_string(input.value().cols()));
  }
  const Activation act = p.architecture().activation;
  Var h = input;
  std::size_t k = 0;
  for (std::size_t li = 0; li < p.layer_count(); ++li) {
    const Var w = net.tensors[k++];
    const Var b = net.tensors[k++];
    h = ad::add_row(ad::matmul(h, w), b);
    if (li + 1 == p.layer_count()) break;
    h = activate(act, h);
    if (!p.layer(li).ln_gain.empty()) {
      const Var gain = net.tensors[k++];
      const Var offset = net.tensors[k++];
      h = ad::add_row(ad::mul_row(ad::normalize_rows(h, kLayerNormEps), gain), offset);
    }
  }
  return h;
}

MlpParams gradient_of(const Tape& tape, const BoundMlp& net) {
  MlpParams g = net.params->zeros_like();
  std::size_t k = 0;
  g.for_each_tensor([&](Tensor& t) { t = tape.gradient(net.tensors[k++]); });
  return g;
}

MlpParams grad(const std::function<Var(Tape&, const BoundMlp&)>& loss_fn,
               const MlpParams& params) {
  Tape tape;
  const BoundMlp net = bind(tape, params, true);
  const Var loss = loss_fn(tape, net);
  tape.backward(loss);
  return gradient_of(tape, net);
}

}  // namespace macflow
