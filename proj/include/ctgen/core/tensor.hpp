#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctgen {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense float32 array, row-major. The single value type used across the
/// pipeline; raw HU slices stay int16 (see data module) until scaling.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}
  Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, std::vector<float>{v}); }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// Element access for 2-D tensors (tests and small numerics only).
  float& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * dim(1) + c)]; }
  float at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * dim(1) + c)]; }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw std::invalid_argument("Tensor::reshaped: numel mismatch " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  float item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: tensor is not a scalar");
    return data_[0];
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor zeros_like(const Tensor& t);
Tensor ones_like(const Tensor& t);

/// 2-D int16 raw-HU image; height x width, row-major.
struct HuImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<int16_t> hu;

  HuImage() = default;
  HuImage(int64_t h, int64_t w) : height(h), width(w), hu(static_cast<size_t>(h * w), 0) {}

  int64_t numel() const { return height * width; }
  int16_t& at(int64_t r, int64_t c) { return hu[static_cast<size_t>(r * width + c)]; }
  int16_t at(int64_t r, int64_t c) const { return hu[static_cast<size_t>(r * width + c)]; }
};

}  // namespace ctgen
