#include "ctgen/core/tensor.hpp"

#include <sstream>

namespace ctgen {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("shape_numel: negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

Tensor ones_like(const Tensor& t) { return Tensor(t.shape(), 1.0f); }

}  // namespace ctgen
