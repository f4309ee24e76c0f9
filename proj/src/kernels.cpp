#include "rsm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "rsm/errors.hpp"

namespace rsm {

namespace {
constexpr int kRowBlock = 32;
} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const int m = a.rows2d();
    const int k = a.cols2d();
    const int kb = b.rows2d();
    const int n = b.cols2d();
    if (a.empty() || b.empty()) throw DimensionError("matmul: empty operand");
    if (k != kb) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " * " + shape_str(b.shape()));
    }
    Tensor c({m, n});
    const float* A = a.data();
    const float* B = b.data();
    float* C = c.data();
#pragma omp parallel for schedule(static)
    for (int i0 = 0; i0 < m; i0 += kRowBlock) {
        const int i1 = std::min(m, i0 + kRowBlock);
        for (int kk = 0; kk < k; ++kk) {
            const float* brow = B + static_cast<int64_t>(kk) * n;
            for (int i = i0; i < i1; ++i) {
                const float av = A[static_cast<int64_t>(i) * k + kk];
                if (av == 0.0f) continue; // skipped terms contribute exactly zero
                float* crow = C + static_cast<int64_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    const int r = a.rows2d();
    const int c = a.cols2d();
    Tensor out({c, r});
    const float* src = a.data();
    float* dst = out.data();
#pragma omp parallel for schedule(static)
    for (int i0 = 0; i0 < r; i0 += kRowBlock) {
        const int i1 = std::min(r, i0 + kRowBlock);
        for (int j = 0; j < c; ++j) {
            for (int i = i0; i < i1; ++i) {
                dst[static_cast<int64_t>(j) * r + i] = src[static_cast<int64_t>(i) * c + j];
            }
        }
    }
    return out;
}

Tensor top_k_mask(const Tensor& a, int b) {
    const int n = a.last_dim();
    if (a.empty()) throw DimensionError("top_k_mask: empty tensor");
    if (b < 1 || b > n) {
        throw ParameterError("top_k_mask: b=" + std::to_string(b) + " outside [1," +
                             std::to_string(n) + "]");
    }
    const int64_t slices = a.numel() / n;
    Tensor mask(a.shape());
    const float* src = a.data();
    float* dst = mask.data();
    if (b == 1) {
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < slices; ++s) {
            const float* row = src + s * n;
            int best = 0;
            for (int j = 1; j < n; ++j) {
                if (row[j] > row[best]) best = j;
            }
            dst[s * n + best] = 1.0f;
        }
        return mask;
    }
#pragma omp parallel
    {
        std::vector<int> idx(static_cast<size_t>(n));
#pragma omp for schedule(static)
        for (int64_t s = 0; s < slices; ++s) {
            const float* row = src + s * n;
            std::iota(idx.begin(), idx.end(), 0);
            std::nth_element(idx.begin(), idx.begin() + (b - 1), idx.end(),
                             [row](int x, int y) {
                                 if (row[x] != row[y]) return row[x] > row[y];
                                 return x < y;
                             });
            for (int t = 0; t < b; ++t) dst[s * n + idx[static_cast<size_t>(t)]] = 1.0f;
        }
    }
    return mask;
}

GroupMax group_max(const Tensor& a) {
    const int n = a.last_dim();
    if (a.empty()) throw DimensionError("group_max: empty tensor");
    const int64_t slices = a.numel() / n;
    std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 1);
    if (out_shape.empty()) out_shape.push_back(1);
    GroupMax gm{Tensor(out_shape), std::vector<int>(static_cast<size_t>(slices), 0)};
    const float* src = a.data();
    float* vals = gm.values.data();
#pragma omp parallel for schedule(static)
    for (int64_t s = 0; s < slices; ++s) {
        const float* row = src + s * n;
        int best = 0;
        for (int j = 1; j < n; ++j) {
            if (row[j] > row[best]) best = j;
        }
        vals[s] = row[best];
        gm.argmax[static_cast<size_t>(s)] = best;
    }
    return gm;
}

Tensor tanh_of(const Tensor& a) {
    Tensor out(a.shape());
    const float* src = a.data();
    float* dst = out.data();
    const int64_t n = a.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] = std::tanh(src[i]);
    return out;
}

Tensor leaky_relu(const Tensor& a, float slope) {
    Tensor out(a.shape());
    const float* src = a.data();
    float* dst = out.data();
    const int64_t n = a.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] = src[i] >= 0.0f ? src[i] : slope * src[i];
    return out;
}

Tensor scale_max(const Tensor& a, const Tensor& b, float gamma) {
    check_same_shape(a, b, "scale_max");
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* dst = out.data();
    const int64_t n = a.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] = std::max(pa[i] * gamma, pb[i]);
    return out;
}

Tensor dropout_mask(const std::vector<int>& shape, float p, Prng& rng) {
    if (p < 0.0f || p >= 1.0f) {
        throw ParameterError("dropout_mask: p=" + std::to_string(p) + " outside [0,1)");
    }
    Tensor mask(shape);
    if (p == 0.0f) {
        mask.fill(1.0f);
        return mask;
    }
    const float keep_scale = 1.0f / (1.0f - p);
    float* dst = mask.data();
    const int64_t n = mask.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] = rng.next_float() < p ? 0.0f : keep_scale;
    return mask;
}

void add_inplace(Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add_inplace");
    float* pa = a.data();
    const float* pb = b.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) pa[i] += pb[i];
}

void scale_inplace(Tensor& a, float s) {
    float* pa = a.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) pa[i] *= s;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* dst = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] = pa[i] - pb[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* dst = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] = pa[i] * pb[i];
    return out;
}

} // namespace rsm
