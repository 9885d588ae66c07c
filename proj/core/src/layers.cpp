#include "dualinf/layers.hpp"

#include <array>

#include "dualinf/errors.hpp"

namespace dualinf {

Tensor ParameterStore::create(const std::string& name, Shape shape, Rng& rng) {
  std::vector<double> values(shape.numel());
  for (double& v : values) v = rng.uniform(-kInitRange, kInitRange);
  Tensor t = Tensor::from(shape, std::move(values), true);
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParameterStore::create_zeros(const std::string& name, Shape shape) {
  Tensor t = Tensor::zeros(shape, true);
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

std::optional<Tensor> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  return std::nullopt;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (Tensor& t : tensors_) t.zero_grad();
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng)
    : weight(store.create(name + ".weight", Shape(out, in), rng)),
      bias(store.create(name + ".bias", Shape(out), rng)) {}

GruCell::GruCell(ParameterStore& store, const std::string& name, std::size_t input,
                 std::size_t hidden, Rng& rng)
    : hidden_(hidden),
      input_weight_(store.create(name + ".input_weight", Shape(3 * hidden, input), rng)),
      input_bias_(store.create(name + ".input_bias", Shape(3 * hidden), rng)),
      gate_weight_(store.create(name + ".gate_weight", Shape(2 * hidden, hidden), rng)),
      cand_weight_(store.create(name + ".cand_weight", Shape(hidden, hidden), rng)) {}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  if (h.shape() != Shape(hidden_)) {
    throw ShapeError("GRU state has shape " + h.shape().str() + ", expected [" +
                     std::to_string(hidden_) + "]");
  }
  const std::size_t H = hidden_;
  const Tensor projected = affine(input_weight_, x, input_bias_);
  const Tensor gates = matmul(gate_weight_, h);
  const Tensor z = sigmoid(slice(projected, 0, H) + slice(gates, 0, H));
  const Tensor r = sigmoid(slice(projected, H, 2 * H) + slice(gates, H, 2 * H));
  const Tensor n = tanh(slice(projected, 2 * H, 3 * H) + matmul(cand_weight_, r * h));
  return h + z * (n - h);
}

BiGruEncoder::BiGruEncoder(ParameterStore& store, const std::string& name, std::size_t input,
                           std::size_t hidden_per_direction, Rng& rng)
    : forward_(store, name + ".fwd", input, hidden_per_direction, rng),
      backward_(store, name + ".bwd", input, hidden_per_direction, rng) {}

Tensor BiGruEncoder::encode(std::span<const Tensor> inputs) const {
  if (inputs.empty()) throw ShapeError("BiGruEncoder::encode on an empty sequence");
  Tensor fwd = forward_.zero_state();
  for (const Tensor& x : inputs) fwd = forward_.step(x, fwd);
  Tensor bwd = backward_.zero_state();
  for (auto it = inputs.rbegin(); it != inputs.rend(); ++it) bwd = backward_.step(*it, bwd);
  const std::array<Tensor, 2> parts{fwd, bwd};
  return concat(parts);
}

}  // namespace dualinf
