#pragma once

#include <vector>

#include "rsm/kernels.hpp"
#include "rsm/prng.hpp"
#include "rsm/tensor.hpp"

namespace rsm {

// Hyperparameters of one RSM layer.
struct RsmConfig {
    int input_size = 0;
    int groups = 0;               // g
    int cells = 0;                // c, cells per group
    int k = 0;                    // active groups per step
    float gamma = 0.0f;           // inhibition decay rate
    float epsilon = 0.0f;         // integration decay rate
    float mu = 0.0f;              // per-row forget probability during training
    float recurrent_dropout_p = 0.0f;
    int feedback_size = 0;        // dim of xB; 0 disables the feedback dendrite
    float lr = 0.0005f;

    int cell_count() const { return groups * cells; }
    void validate() const;        // throws ParameterError
};

// Learned weights. Cells in a group share wF; every cell has its own wR row.
// wD is a separate decoder (transpose-shaped vs wF, never tied).
struct RsmParams {
    Tensor wF;   // [g, input_size]
    Tensor wR;   // [g*c, g*c]
    Tensor wB;   // [g*c, feedback_size], empty when feedback_size == 0
    Tensor wD;   // [input_size, g]
};

// Persistent recurrent quantities.
struct RsmState {
    Tensor phi;  // inhibition, [batch, g, c], in [0,1]
    Tensor psi;  // integrated activity, [batch, g, c], >= 0
    Tensor xR;   // normalized recurrent input, [batch, g*c]

    int batch() const { return phi.empty() ? 0 : phi.dim(0); }
    void zero_row(int row);
};

// Everything the backward pass needs from one forward step.
struct RsmForwardTrace {
    Tensor zF;                 // [batch, g]
    Tensor zR;                 // [batch, g, c]
    Tensor zB;                 // [batch, g, c] or empty
    Tensor sigma;              // [batch, g, c]
    Tensor pi;                 // [batch, g, c]
    Tensor piG;                // [batch, g]
    Tensor maskC;              // [batch, g, c], one 1 per group
    Tensor maskG;              // [batch, g], k ones per row
    Tensor y;                  // [batch, g, c]
    Tensor yG;                 // [batch, g]
    std::vector<int> yG_argmax;// winning cell per (batch, group)
    Tensor xHat;               // [batch, input_size]
    Tensor alpha;              // [batch]
    Tensor xF;                 // input as consumed
    Tensor xR_used;            // recurrent input after dropout
    Tensor xB;                 // feedback input or empty
};

struct RsmForwardResult {
    RsmForwardTrace trace;
    RsmState state;
};

struct RsmGrads {
    float loss = 0.0f;
    Tensor wF;
    Tensor wR;
    Tensor wB;   // empty when the layer has no feedback input
    Tensor wD;
};

// Weights ~ uniform(-s, s), s = 1/sqrt(fan_in) per matrix; wD drawn
// independently of wF. Draw order: wF, wR, wB, wD.
RsmParams init_params(const RsmConfig& cfg, Prng& rng);

// All-zero state for `batch` rows.
RsmState reset_state(const RsmConfig& cfg, int batch);

// One step of the layer. Consumes state(t), returns the trace plus state(t+1).
// Recurrent dropout is applied to the consumed copy of xR only when training.
RsmForwardResult forward(const RsmParams& params, const RsmConfig& cfg, const RsmState& state,
                         const Tensor& xF, const Tensor* xB, bool training, Prng& rng);

// MSE against the next observation plus hand-derived gradients. Masks, phi,
// psi, alpha and both hard-max selections are constants: gradients flow from
// the prediction through wD to the bottleneck and stop at the encoders.
RsmGrads loss_and_grads(const RsmForwardTrace& trace, const Tensor& target,
                        const RsmParams& params);

// With probability mu per batch row, zero that row's phi/psi/xR.
void apply_forget(RsmState& state, const RsmConfig& cfg, Prng& rng);
// Same, but rows are chosen by the caller.
void forget_rows(RsmState& state, const std::vector<uint8_t>& rows);

// Inverted dropout on the recurrent input; identity when not training or p==0.
Tensor recurrent_dropout(const Tensor& xR, float p, Prng& rng, bool training);

// Internal building blocks shared with the convolutional variant. `rows`
// plays the role of the batch dimension (batch*positions for conv).
namespace detail {
RsmForwardTrace encode(const RsmParams& params, const RsmConfig& cfg, const RsmState& state,
                       const Tensor& xF, const Tensor* xB, bool training, Prng& rng,
                       RsmState& next_state);
// Backward from d(loss)/d(yG) through the bottleneck to the encoder weights.
void grads_from_dyG(const RsmForwardTrace& trace, const Tensor& dyG, RsmGrads& out);
} // namespace detail

} // namespace rsm
