#include "gcanet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gcanet {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape_(s), data_(static_cast<size_t>(s.numel()), fill) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
        throw std::invalid_argument("Tensor: negative dimension in shape " + s.str());
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape_(s), data_(std::move(values)) {
    if (static_cast<int64_t>(data_.size()) != s.numel())
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + s.str());
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

void check_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (!(a == b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.str() + " vs " +
                                    b.str());
}

}  // namespace gcanet
