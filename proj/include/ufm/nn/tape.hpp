#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ufm/nn/tensor.hpp"

namespace ufm::nn {

class Tape;

// Handle to a matrix-valued node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  std::size_t rows() const;
  std::size_t cols() const;
  std::span<const double> value() const;
  // Gradient of the last backward() target w.r.t. this node (zeros if the
  // node did not influence it).
  std::span<const double> grad() const;
  double item() const;
};

// Reverse-mode recorder. Nodes are appended in evaluation order, so reverse
// creation order is a valid topological order for the backward sweep.
//
// Parameters come from a ParamStore. A tape built over a mutable store
// accumulates parameter gradients into Tensor::grad on backward(); a tape
// built over a const store is forward-only and may be used concurrently with
// other forward-only tapes over the same store.
class Tape {
 public:
  explicit Tape(ParamStore& store);
  explicit Tape(const ParamStore& store);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool records_gradients() const { return mutable_store_ != nullptr; }
  const ParamStore& store() const { return *store_; }

  // Leaf holding a parameter. Repeated lookups of the same name return the
  // same node so gradients from every use are accumulated.
  Var param(const std::string& name);
  Var constant(std::size_t rows, std::size_t cols, std::vector<double> values);

  // Runs the backward sweep from a 1x1 node and adds d(out)/d(param) into the
  // store's gradient buffers (allocating them when absent). Throws
  // NumericalError if a non-finite gradient appears.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

  // Internal node API used by the op implementations.
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Tape&)> backward;
    std::string param_name;
  };
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::vector<double>& grad_of(int id);
  Var push(std::size_t rows, std::size_t cols, std::vector<double> value, const char* op,
           std::function<void(Tape&)> backward = {});

 private:
  const ParamStore* store_;
  ParamStore* mutable_store_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
};

// --- differentiable ops ----------------------------------------------------
// Every op validates shapes (ValidationError) and checks its forward result
// for non-finite values (NumericalError).

Var matmul(Var a, Var b);                    // (n,k) x (k,m)
Var add_bias(Var a, Var bias);               // (n,m) + (1,m) broadcast over rows
Var add(Var a, Var b);                       // same shape
Var sub(Var a, Var b);                       // same shape
Var mul(Var a, Var b);                       // elementwise, same shape
Var affine(Var a, double scale, double shift);  // scale * a + shift
Var tanh(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var concat_cols(std::span<const Var> parts);  // same row count
Var gather_rows(Var table, std::span<const int> rows);
Var scale_rows(Var a, std::span<const double> row_scale);
Var sum(Var a);                               // -> 1x1
// mean over all entries of (a - target)^2 -> 1x1
Var mean_squared_error(Var a, std::span<const double> target);
// mean over rows of -log softmax(logits)[label] -> 1x1
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ufm::nn
