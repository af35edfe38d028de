#pragma once

#include <span>
#include <string>
#include <vector>

#include "ufm/nn/tape.hpp"
#include "ufm/nn/tensor.hpp"
#include "ufm/rng.hpp"

namespace ufm::nn {

enum class Activation { Tanh, Silu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
Var activate(Var x, Activation a);

// Dense stack with sizes {in, hidden..., out}. Parameters are
// "<prefix>.l<i>.w" (sizes[i] x sizes[i+1]) and "<prefix>.l<i>.b"
// (1 x sizes[i+1]). Weights are Glorot-uniform, biases zero.
void init_mlp(ParamStore& store, const std::string& prefix, std::span<const std::size_t> sizes,
              Pcg32& rng);

// Affine + activation for every layer except the last, which stays linear.
// Throws ValidationError naming the offending layer on any shape mismatch.
Var mlp_forward(Tape& tape, const std::string& prefix, Var input,
                std::span<const std::size_t> sizes, Activation act);

// Gated recurrent unit:
//   r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   h' = (1 - z) * n + z * h
void init_gru(ParamStore& store, const std::string& prefix, std::size_t input_dim,
              std::size_t hidden_dim, Pcg32& rng);
Var gru_step(Tape& tape, const std::string& prefix, Var input, Var hidden);

// Trainable lookup table "<prefix>.table" of shape (count x dim).
void init_embedding(ParamStore& store, const std::string& prefix, std::size_t count,
                    std::size_t dim, Pcg32& rng);
Var embed(Tape& tape, const std::string& prefix, std::span<const int> ids);

}  // namespace ufm::nn
