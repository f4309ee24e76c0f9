#include "rsm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "rsm/errors.hpp"

namespace rsm {

int64_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) return 0;
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw DimensionError("value count " + std::to_string(data_.size()) +
                             " does not fill shape " + shape_str(shape_));
    }
}

Tensor Tensor::with_shape(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw DimensionError("cannot view " + shape_str(shape_) + " as " + shape_str(new_shape));
    }
    Tensor out;
    out.shape_ = std::move(new_shape);
    out.data_ = data_;
    return out;
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(float v) {
    for (auto& x : data_) x = v;
}

float Tensor::sum() const {
    float s = 0.0f;
    for (float v : data_) s += v;
    return s;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(where) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

void check_finite(const Tensor& t, const char* where) {
    if (!t.all_finite()) {
        throw NumericError(std::string(where) + ": non-finite value");
    }
}

} // namespace rsm
