#pragma once

#include <optional>
#include <vector>

#include "rsm/adam.hpp"
#include "rsm/layer.hpp"
#include "rsm/prng.hpp"
#include "rsm/tensor.hpp"

namespace rsm {

// Receptive-field bookkeeping for the convolutional variant. Valid padding:
// out = (in - field)/stride + 1 (floor).
struct ConvGeometry {
    int field_h = 1, field_w = 1;
    int stride_h = 1, stride_w = 1;
    int pool = 1;              // spatial max-pool applied to the outgoing xR map
    int in_h = 1, in_w = 1;
    int in_channels = 1;

    int out_h() const { return (in_h - field_h) / stride_h + 1; }
    int out_w() const { return (in_w - field_w) / stride_w + 1; }
    int patch_size() const { return field_h * field_w * in_channels; }
    int positions() const { return out_h() * out_w(); }
    void validate() const;     // throws ParameterError / DimensionError
};

// Per-position recurrent state; parameters are shared across positions,
// phi/psi/xR are not.
struct ConvRsmState {
    Tensor phi;   // [batch, out_h, out_w, g, c]
    Tensor psi;   // [batch, out_h, out_w, g, c]
    Tensor xR;    // [batch, out_h, out_w, g*c]
};

struct ConvForwardResult {
    RsmForwardTrace trace;   // rows = batch * positions; xF holds the im2col patches
    ConvRsmState state;
    Tensor xHat;             // [batch, in_h, in_w, in_channels] reconstruction
    Tensor xR_map;           // [batch, out_h, out_w, g*c], the inter-layer signal
};

ConvRsmState conv_reset_state(const RsmConfig& cfg, const ConvGeometry& geom, int batch);

// Patch extraction: [batch, h, w, ch] -> [batch*out_h*out_w, field_h*field_w*ch].
Tensor im2col(const Tensor& image, const ConvGeometry& geom);
// Adjoint scatter-add of im2col; accumulates overlapping windows.
Tensor col2im_add(const Tensor& cols, const ConvGeometry& geom, int batch);

// Bilinear resize of [batch, h2, w2, d] to [batch, h1, w1, d] with corner
// alignment; exact identity when the sizes already match.
Tensor feedback_interpolate(const Tensor& map, int target_h, int target_w);

// Spatial max-pool of [batch, h, w, d] by `pool`; throws unless pool divides
// both spatial dims.
Tensor pool_up(const Tensor& map, int pool);

// One step of the convolutional layer: each filter position runs the dense
// layer with shared weights and its own state; recurrent input is 1x1 (each
// position feeds only itself); decoding is a transposed convolution with wD.
ConvForwardResult conv_forward(const RsmParams& params, const ConvGeometry& geom,
                               const RsmConfig& cfg, const ConvRsmState& state,
                               const Tensor& xF_image, const Tensor* xB_map,
                               bool training, Prng& rng);

// MSE against the next input image plus gradients (masks frozen, as in the
// dense layer). wD's gradient comes from the transposed-conv adjoint.
RsmGrads conv_loss_and_grads(const RsmForwardTrace& trace, const Tensor& xHat,
                             const Tensor& target_image, const ConvGeometry& geom,
                             const RsmParams& params);

void conv_apply_forget(ConvRsmState& state, const RsmConfig& cfg, Prng& rng);

// One convolutional RSM layer bundled with its optimizer state.
struct ConvUnit {
    RsmConfig cfg;
    ConvGeometry geom;
    RsmParams params;
    AdamState adam_wF, adam_wR, adam_wB, adam_wD;
    ConvRsmState state;

    // retained between steps so each layer can train against its next input
    bool has_pending = false;
    RsmForwardTrace pending_trace;
    Tensor pending_xHat;

    static ConvUnit create(const RsmConfig& cfg, const ConvGeometry& geom, Prng& rng);
    void reset(int batch);
    float train_pending(const Tensor& target_image);   // returns loss, no-op -1 if nothing pending
};

// Two-layer stack: lower predicts the next frame, upper predicts the next
// pooled lower-layer xR map. Feedback to the lower layer is the upper
// layer's previous xR map, bilinearly resized. No gradient crosses layers.
struct RsmStack {
    ConvUnit lower;
    std::optional<ConvUnit> upper;

    struct StepResult {
        Tensor prediction;    // lower-layer next-frame estimate
        float lower_loss = -1.0f;
        float upper_loss = -1.0f;
    };

    void reset(int batch);
    // Feed one frame; when `train` is set, first trains both layers' pending
    // traces against their freshly arrived targets.
    StepResult step(const Tensor& frame, bool train, Prng& rng);
    void drop_pending();
};

// Feed `priming` frames, then run `n_steps` feeding the clamped prediction
// back as input. Returns the generated frames, all within [0,1].
std::vector<Tensor> self_loop_generate(RsmStack& stack, const std::vector<Tensor>& priming,
                                       int n_steps, Prng& rng);

} // namespace rsm
