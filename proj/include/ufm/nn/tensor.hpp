#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ufm::nn {

// Dense row-major array of doubles. Shapes are at most 2-D in practice; a
// 1-D tensor of length n is treated as a 1 x n row where a matrix is needed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty() || data_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  // Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Named parameters plus Adam moment estimates. Names are hierarchical paths
// such as "vfield.l0.w"; iteration is in lexicographic order, which fixes the
// order of every reduction over parameters.
class ParamStore {
 public:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  // Registers a parameter; throws ValidationError on duplicate names.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  // Throws ValidationError naming the missing parameter.
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, Tensor>& params() { return params_; }
  Moments& moments(const std::string& name);

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  void zero_grad();
  std::size_t parameter_count() const;
  // Euclidean norm over all parameter values.
  double value_norm() const;
  double grad_norm() const;

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Moments> moments_;
  std::int64_t step_ = 0;
};

}  // namespace ufm::nn
