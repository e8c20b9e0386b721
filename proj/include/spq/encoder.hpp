#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "spq/tensor.hpp"

namespace spq {

// Layers of the small trainable feature extractor. Conv uses same-padding
// (pad=1); pooling is 2x2 stride 2. Activations are NHWC.
struct Conv3x3 {
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    Tensor weights;  // [3,3,in_ch,out_ch]
    Tensor bias;     // [out_ch]
};

struct ReLULayer {};
struct MaxPool2x2 {};
struct FlattenLayer {};

struct Affine {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Tensor weights;  // [in_dim,out_dim]
    Tensor bias;     // [out_dim]
};

using Layer = std::variant<Conv3x3, ReLULayer, MaxPool2x2, FlattenLayer, Affine>;

struct EncoderParams {
    std::size_t input_h = 0;
    std::size_t input_w = 0;
    std::size_t input_ch = 3;
    std::size_t output_dim = 0;
    std::vector<Layer> layers;

    // Walks the shape chain; throws on any mismatch.
    void validate() const;

    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
};

// Conv(3->32)+ReLU+Pool, Conv(32->64)+ReLU+Pool, Flatten, Affine(->D).
// He-uniform weights, zero bias, drawn from the given rng.
EncoderParams make_default_encoder(std::size_t input_h, std::size_t input_w,
                                   std::size_t output_dim, Rng& rng);

// Single Affine(D->D) over already-extracted descriptors; used by tests that
// need a trainable but trivial encoder.
EncoderParams make_affine_encoder(std::size_t in_dim, std::size_t out_dim, Rng& rng);

struct EncoderTape {
    // Input to each layer, in order; plus the final output shape.
    std::vector<Tensor> inputs;
    std::vector<std::vector<std::size_t>> pool_argmax;  // per MaxPool layer position
    bool consumed = false;
};

// Gradients mirror the parameter layout.
struct EncoderGrads {
    std::vector<Layer> layers;

    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
};

Tensor encoder_forward(const EncoderParams& params, const Tensor& batch, EncoderTape& tape);

// grad_descriptors: [B,D]. Returns parameter grads; the tape is consumed.
EncoderGrads encoder_backward(const EncoderParams& params, EncoderTape& tape,
                              const Tensor& grad_descriptors,
                              Tensor* grad_input = nullptr);

EncoderGrads zero_grads_like(const EncoderParams& params);

// Identity over descriptor batches, no trainable parameters.
Tensor passthrough(const Tensor& batch, std::size_t expected_dim);

}  // namespace spq
