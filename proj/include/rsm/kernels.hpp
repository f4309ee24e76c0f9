#pragma once

#include <vector>

#include "rsm/prng.hpp"
#include "rsm/tensor.hpp"

namespace rsm {

// C = A * B with both operands read as 2-d matrices [shape[0], numel/shape[0]].
// Deterministic for any thread count: each output element accumulates its
// products in ascending inner-index order. Zero entries of A are skipped;
// the k-sparse activations make most training-time products cheap.
Tensor matmul(const Tensor& a, const Tensor& b);

// 2-d transpose of [r, c] -> [c, r].
Tensor transpose(const Tensor& a);

// Binary mask with exactly `b` ones per trailing slice, placed on the b
// largest values. Ties break toward the lowest index.
Tensor top_k_mask(const Tensor& a, int b);

struct GroupMax {
    Tensor values;            // last dimension reduced away
    std::vector<int> argmax;  // winning index per slice; ties -> lowest index
};

// Max over the last dimension.
GroupMax group_max(const Tensor& a);

Tensor tanh_of(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope);
// Elementwise max(a * gamma, b); the inhibition/integration decay primitive.
Tensor scale_max(const Tensor& a, const Tensor& b, float gamma);
// Inverted dropout mask: entries are 0 with probability p, else 1/(1-p).
Tensor dropout_mask(const std::vector<int>& shape, float p, Prng& rng);

// Elementwise helpers.
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, float s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

} // namespace rsm
