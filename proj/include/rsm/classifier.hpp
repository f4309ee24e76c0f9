#pragma once

#include <vector>

#include "rsm/adam.hpp"
#include "rsm/prng.hpp"
#include "rsm/tensor.hpp"

namespace rsm {

// Two-layer label classifier fed by detached RSM state. Trains with exact
// two-layer backprop; nothing here ever touches RSM parameters or state.
struct MlpParams {
    Tensor w1;   // [hidden, input]
    Tensor b1;   // [hidden]
    Tensor w2;   // [labels, hidden]
    Tensor b2;   // [labels]
    float l2 = 1e-5f;
    float leaky_slope = 0.2f;

    int input_size() const { return w1.empty() ? 0 : w1.dim(1); }
    int labels() const { return w2.empty() ? 0 : w2.dim(0); }
};

struct MlpAdam {
    AdamState w1, b1, w2, b2;
};

struct MlpOutput {
    Tensor pre1;    // [batch, hidden], pre-activation
    Tensor hidden;  // [batch, hidden]
    Tensor logits;  // [batch, labels]
    Tensor probs;   // [batch, labels], rows sum to 1
};

MlpParams init_mlp(int input, int hidden, int labels, Prng& rng, float l2 = 1e-5f);
MlpAdam mlp_adam_for(const MlpParams& p, float lr = 0.0005f);

MlpOutput classify(const MlpParams& p, const Tensor& features);

struct MlpGrads {
    float loss = 0.0f;   // cross-entropy + l2 penalty
    Tensor w1, b1, w2, b2;
};

// Cross-entropy + l2*(|w1|^2 + |w2|^2) and its exact gradients.
MlpGrads mlp_loss_and_grads(const MlpParams& p, const Tensor& features,
                            const std::vector<int>& labels);

// One training step (loss, gradients, Adam update). Returns the loss.
float mlp_train_step(MlpParams& p, const Tensor& features, const std::vector<int>& labels,
                     MlpAdam& adam);

} // namespace rsm
