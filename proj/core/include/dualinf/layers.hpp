#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualinf/tensor.hpp"

namespace dualinf {

// Ordered, named parameter registry. Creation order is the checkpoint order.
class ParameterStore {
 public:
  static constexpr double kInitRange = 0.08;

  Tensor create(const std::string& name, Shape shape, Rng& rng);
  Tensor create_zeros(const std::string& name, Shape shape);

  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::optional<Tensor> find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

struct Linear {
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng);
  Tensor operator()(const Tensor& x) const { return affine(weight, x, bias); }
  std::size_t out_features() const { return bias.size(); }
};

// Gated recurrent cell:
//   z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r * h) + bn), h' = h + z * (n - h)
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, std::size_t input, std::size_t hidden,
          Rng& rng);

  Tensor step(const Tensor& x, const Tensor& h) const;
  Tensor zero_state() const { return Tensor::zeros(Shape(hidden_)); }
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Tensor input_weight_;   // (3H, in) rows: z, r, n
  Tensor input_bias_;     // (3H)
  Tensor gate_weight_;    // (2H, H) rows: z, r
  Tensor cand_weight_;    // (H, H)
};

// Bidirectional GRU summarizing a sequence as [last forward ; first backward].
class BiGruEncoder {
 public:
  BiGruEncoder() = default;
  BiGruEncoder(ParameterStore& store, const std::string& name, std::size_t input,
               std::size_t hidden_per_direction, Rng& rng);

  Tensor encode(std::span<const Tensor> inputs) const;
  std::size_t output_size() const { return 2 * forward_.hidden(); }

 private:
  GruCell forward_;
  GruCell backward_;
};

}  // namespace dualinf
