#include "ufm/nn/layers.hpp"

#include <cmath>

#include "ufm/error.hpp"

namespace ufm::nn {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Pcg32& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

void expect_shape(const Tape& tape, const std::string& name, std::size_t rows, std::size_t cols,
                  const std::string& where) {
  const Tensor& t = tape.store().at(name);
  if (t.rows() != rows || t.cols() != cols) {
    throw ValidationError(where + ": parameter " + name + " has shape " + shape_string(t.shape()) +
                          ", expected [" + std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "silu") return Activation::Silu;
  throw ValidationError("unknown activation '" + name + "' (expected tanh or silu)");
}

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "silu"; }

Var activate(Var x, Activation a) { return a == Activation::Tanh ? tanh(x) : silu(x); }

void init_mlp(ParamStore& store, const std::string& prefix, std::span<const std::size_t> sizes,
              Pcg32& rng) {
  if (sizes.size() < 2) throw ValidationError(prefix + ": an MLP needs at least two sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    store.add(layer + ".w", glorot(sizes[i], sizes[i + 1], rng));
    store.add(layer + ".b", Tensor({1, sizes[i + 1]}));
  }
}

Var mlp_forward(Tape& tape, const std::string& prefix, Var input,
                std::span<const std::size_t> sizes, Activation act) {
  if (sizes.size() < 2) throw ValidationError(prefix + ": an MLP needs at least two sizes");
  if (input.cols() != sizes[0]) {
    throw ValidationError(prefix + ".l0: input width " + std::to_string(input.cols()) +
                          " does not match layer size " + std::to_string(sizes[0]));
  }
  Var h = input;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    expect_shape(tape, layer + ".w", sizes[i], sizes[i + 1], layer);
    expect_shape(tape, layer + ".b", 1, sizes[i + 1], layer);
    h = add_bias(matmul(h, tape.param(layer + ".w")), tape.param(layer + ".b"));
    if (i + 2 < sizes.size()) h = activate(h, act);
  }
  return h;
}

void init_gru(ParamStore& store, const std::string& prefix, std::size_t input_dim,
              std::size_t hidden_dim, Pcg32& rng) {
  for (const char* g : {"r", "z", "n"}) {
    store.add(prefix + ".w_i" + g, glorot(input_dim, hidden_dim, rng));
    store.add(prefix + ".w_h" + g, glorot(hidden_dim, hidden_dim, rng));
    store.add(prefix + ".b_i" + g, Tensor({1, hidden_dim}));
    store.add(prefix + ".b_h" + g, Tensor({1, hidden_dim}));
  }
}

Var gru_step(Tape& tape, const std::string& prefix, Var input, Var hidden) {
  const std::size_t d = hidden.cols();
  const std::size_t in = input.cols();
  if (input.rows() != hidden.rows()) {
    throw ValidationError(prefix + ": input has " + std::to_string(input.rows()) +
                          " rows but hidden has " + std::to_string(hidden.rows()));
  }
  for (const char* g : {"r", "z", "n"}) {
    expect_shape(tape, prefix + ".w_i" + g, in, d, prefix);
    expect_shape(tape, prefix + ".w_h" + g, d, d, prefix);
    expect_shape(tape, prefix + ".b_i" + g, 1, d, prefix);
    expect_shape(tape, prefix + ".b_h" + g, 1, d, prefix);
  }
  auto gate_in = [&](const char* g) {
    return add_bias(matmul(input, tape.param(prefix + ".w_i" + g)), tape.param(prefix + ".b_i" + g));
  };
  auto gate_h = [&](const char* g) {
    return add_bias(matmul(hidden, tape.param(prefix + ".w_h" + g)),
                    tape.param(prefix + ".b_h" + g));
  };
  Var r = sigmoid(add(gate_in("r"), gate_h("r")));
  Var z = sigmoid(add(gate_in("z"), gate_h("z")));
  Var n = tanh(add(gate_in("n"), mul(r, gate_h("n"))));
  // (1 - z) * n + z * h  ==  n + z * (h - n)
  return add(n, mul(z, sub(hidden, n)));
}

void init_embedding(ParamStore& store, const std::string& prefix, std::size_t count,
                    std::size_t dim, Pcg32& rng) {
  Tensor t({count, dim});
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * scale;
  store.add(prefix + ".table", std::move(t));
}

Var embed(Tape& tape, const std::string& prefix, std::span<const int> ids) {
  return gather_rows(tape.param(prefix + ".table"), ids);
}

}  // namespace ufm::nn
