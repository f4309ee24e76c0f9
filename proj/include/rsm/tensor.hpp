#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rsm {

// Dense row-major float32 array with an explicit shape. All model state,
// parameters and gradients live in these; kernels interpret the shape as
// needed (most treat a tensor as the 2-d matrix [shape[0], numel/shape[0]]).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, float fill);
    Tensor(std::vector<int> shape, std::vector<float> values);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    int rows2d() const { return shape_.empty() ? 0 : shape_[0]; }
    int cols2d() const {
        return shape_.empty() ? 0 : static_cast<int>(numel() / shape_[0]);
    }
    int last_dim() const { return shape_.empty() ? 0 : shape_.back(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    float& at(int r, int c) { return data_[static_cast<size_t>(r) * cols2d() + c]; }
    float at(int r, int c) const { return data_[static_cast<size_t>(r) * cols2d() + c]; }

    // Same data, different shape (element count must match).
    Tensor with_shape(std::vector<int> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(float v);
    float sum() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Throws DimensionError unless both shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);
// Throws NumericError naming `where` if the tensor holds a NaN/Inf.
void check_finite(const Tensor& t, const char* where);

} // namespace rsm
