#include "embreg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace embreg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape.size() == 2) return shape[0];
  if (shape.size() > 2) throw std::logic_error("rows() on rank " + std::to_string(shape.size()) + " tensor");
  return 1;
}

std::size_t Tensor::cols() const {
  if (shape.size() == 2) return shape[1];
  if (shape.size() == 1) return shape[0];
  if (shape.empty()) return 1;
  throw std::logic_error("cols() on rank " + std::to_string(shape.size()) + " tensor");
}

double Tensor::item() const {
  if (data.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (auto& x : data) x = v;
}

}  // namespace embreg
