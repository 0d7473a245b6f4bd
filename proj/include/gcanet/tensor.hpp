#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gcanet {

// NCHW shape. All tensors in the engine are 4-D; lower-rank data uses
// size-1 dimensions.
struct Shape {
    int64_t n = 0, c = 0, h = 0, w = 0;

    int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Dense row-major NCHW value tensor, 64-bit.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return shape_.numel(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    double at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }

    double& operator[](int64_t i) { return data_[i]; }
    double operator[](int64_t i) const { return data_[i]; }

    void fill(double v);
    bool all_finite() const;

  private:
    Shape shape_;
    std::vector<double> data_;
};

// Throws std::invalid_argument naming the op and both shapes.
void check_same_shape(const char* op, const Shape& a, const Shape& b);

}  // namespace gcanet
