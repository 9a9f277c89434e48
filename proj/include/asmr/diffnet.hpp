#pragma once

#include <cstdint>
#include <vector>

#include "asmr/linalg.hpp"
#include "asmr/rng.hpp"

namespace asmr {

struct DenseLayer {
    Matrix weight;  // out_dim x in_dim
    Vec bias;       // out_dim
};

// MLP with ReLU after every layer but the last. With normalize_output the
// final activations are projected to the unit sphere; classifier heads leave
// it off and emit raw logits.
struct EncoderNet {
    std::vector<DenseLayer> layers;
    bool normalize_output = true;

    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t output_dim() const { return layers.back().weight.rows; }
};

// Weights uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
// dims = {in, hidden..., out}; at least one layer.
EncoderNet make_encoder(const std::vector<std::size_t>& dims, bool normalize_output, Rng& rng);

struct LayerGrads {
    Matrix d_weight;
    Vec d_bias;
};

struct NetGrads {
    std::vector<LayerGrads> layers;

    static NetGrads like(const EncoderNet& net);
    void zero();
};

// Intermediate activations of one batch forward pass, kept for backward.
struct ForwardCache {
    Matrix input;                // m x in
    std::vector<Matrix> pre;     // pre-activation Z per layer
    std::vector<Matrix> post;    // post-ReLU activations per non-final layer
    Matrix output;               // m x out (normalized when enabled)
    Vec prenorm_norms;           // per-row |Z_last|, only when normalizing
};

// output = net(X) row-wise; cache filled for backward.
void forward_batch(const EncoderNet& net, const Matrix& X, ForwardCache& cache);
Vec forward(const EncoderNet& net, const Vec& x);

// Accumulates d<upstream, output>/dparams into grads. upstream is the loss
// gradient at the net output (m x out). d_input, when given, receives the
// gradient at X (overwritten, m x in).
void backward_batch(const EncoderNet& net, const ForwardCache& cache, const Matrix& upstream,
                    NetGrads& grads, Matrix* d_input = nullptr);
NetGrads backward(const EncoderNet& net, const Vec& x, const Vec& upstream);

}  // namespace asmr
