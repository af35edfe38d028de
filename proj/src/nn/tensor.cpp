#include "ufm/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "ufm/error.hpp"

namespace ufm::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw ValidationError("tensor data has " + std::to_string(data_.size()) +
                          " entries but shape " + shape_string(shape_) + " needs " +
                          std::to_string(product(shape_)));
  }
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  return data_.size() / shape_[0];
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw ValidationError("duplicate parameter " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter " + name);
  return it->second;
}

ParamStore::Moments& ParamStore::moments(const std::string& name) {
  auto& m = moments_[name];
  const std::size_t n = at(name).size();
  if (m.first.size() != n) {
    m.first.assign(n, 0.0);
    m.second.assign(n, 0.0);
  }
  return m;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

double ParamStore::value_norm() const {
  double s = 0.0;
  for (const auto& [_, t] : params_) {
    for (double v : t.data()) s += v * v;
  }
  return std::sqrt(s);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, t] : params_) {
    for (double v : t.grad()) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace ufm::nn
