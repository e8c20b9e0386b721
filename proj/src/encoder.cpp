#include "spq/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace spq {

namespace {

struct Shape3 {
    std::size_t h, w, c;
    bool flat = false;
    std::size_t flat_dim = 0;
};

Shape3 step_shape(const Shape3& in, const Layer& layer) {
    Shape3 out = in;
    if (std::holds_alternative<Conv3x3>(layer)) {
        const auto& conv = std::get<Conv3x3>(layer);
        if (in.flat) throw std::invalid_argument("encoder: Conv3x3 after Flatten");
        if (in.c != conv.in_ch) throw std::invalid_argument("encoder: Conv3x3 channel mismatch");
        if (conv.weights.shape != std::vector<std::size_t>{3, 3, conv.in_ch, conv.out_ch} ||
            conv.bias.shape != std::vector<std::size_t>{conv.out_ch}) {
            throw std::invalid_argument("encoder: Conv3x3 weight shape mismatch");
        }
        out.c = conv.out_ch;
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
        if (in.flat) throw std::invalid_argument("encoder: MaxPool2x2 after Flatten");
        if (in.h % 2 != 0 || in.w % 2 != 0) {
            throw std::invalid_argument("encoder: MaxPool2x2 needs even spatial dims");
        }
        out.h = in.h / 2;
        out.w = in.w / 2;
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
        if (in.flat) throw std::invalid_argument("encoder: double Flatten");
        out.flat = true;
        out.flat_dim = in.h * in.w * in.c;
    } else if (std::holds_alternative<Affine>(layer)) {
        const auto& aff = std::get<Affine>(layer);
        const std::size_t in_dim = in.flat ? in.flat_dim : in.h * in.w * in.c;
        if (!in.flat && !(in.h == 1 && in.w == 1)) {
            throw std::invalid_argument("encoder: Affine before Flatten");
        }
        if (in_dim != aff.in_dim) throw std::invalid_argument("encoder: Affine dim mismatch");
        if (aff.weights.shape != std::vector<std::size_t>{aff.in_dim, aff.out_dim} ||
            aff.bias.shape != std::vector<std::size_t>{aff.out_dim}) {
            throw std::invalid_argument("encoder: Affine weight shape mismatch");
        }
        out.flat = true;
        out.flat_dim = aff.out_dim;
    }
    return out;
}

double he_uniform_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

void fill_he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double b = he_uniform_bound(fan_in);
    for (double& v : t.data) v = rng.uniform(-b, b);
}

}  // namespace

void EncoderParams::validate() const {
    Shape3 s{input_h, input_w, input_ch};
    for (const auto& layer : layers) s = step_shape(s, layer);
    const std::size_t final_dim = s.flat ? s.flat_dim : s.h * s.w * s.c;
    if (final_dim != output_dim) {
        throw std::invalid_argument("encoder: final dim != output_dim");
    }
}

std::vector<Tensor*> EncoderParams::trainable() {
    std::vector<Tensor*> out;
    for (auto& layer : layers) {
        if (auto* c = std::get_if<Conv3x3>(&layer)) {
            out.push_back(&c->weights);
            out.push_back(&c->bias);
        } else if (auto* a = std::get_if<Affine>(&layer)) {
            out.push_back(&a->weights);
            out.push_back(&a->bias);
        }
    }
    return out;
}

std::vector<const Tensor*> EncoderParams::trainable() const {
    std::vector<const Tensor*> out;
    for (const auto& layer : layers) {
        if (const auto* c = std::get_if<Conv3x3>(&layer)) {
            out.push_back(&c->weights);
            out.push_back(&c->bias);
        } else if (const auto* a = std::get_if<Affine>(&layer)) {
            out.push_back(&a->weights);
            out.push_back(&a->bias);
        }
    }
    return out;
}

std::vector<Tensor*> EncoderGrads::trainable() {
    std::vector<Tensor*> out;
    for (auto& layer : layers) {
        if (auto* c = std::get_if<Conv3x3>(&layer)) {
            out.push_back(&c->weights);
            out.push_back(&c->bias);
        } else if (auto* a = std::get_if<Affine>(&layer)) {
            out.push_back(&a->weights);
            out.push_back(&a->bias);
        }
    }
    return out;
}

std::vector<const Tensor*> EncoderGrads::trainable() const {
    std::vector<const Tensor*> out;
    for (const auto& layer : layers) {
        if (const auto* c = std::get_if<Conv3x3>(&layer)) {
            out.push_back(&c->weights);
            out.push_back(&c->bias);
        } else if (const auto* a = std::get_if<Affine>(&layer)) {
            out.push_back(&a->weights);
            out.push_back(&a->bias);
        }
    }
    return out;
}

EncoderParams make_default_encoder(std::size_t input_h, std::size_t input_w,
                                   std::size_t output_dim, Rng& rng) {
    EncoderParams p;
    p.input_h = input_h;
    p.input_w = input_w;
    p.input_ch = 3;
    p.output_dim = output_dim;

    Conv3x3 c1{3, 32, Tensor({3, 3, 3, 32}), Tensor({32})};
    fill_he_uniform(c1.weights, 3 * 3 * 3, rng);
    Conv3x3 c2{32, 64, Tensor({3, 3, 32, 64}), Tensor({64})};
    fill_he_uniform(c2.weights, 3 * 3 * 32, rng);
    const std::size_t flat = (input_h / 4) * (input_w / 4) * 64;
    Affine fc{flat, output_dim, Tensor({flat, output_dim}), Tensor({output_dim})};
    fill_he_uniform(fc.weights, flat, rng);

    p.layers = {std::move(c1), ReLULayer{}, MaxPool2x2{},
                std::move(c2), ReLULayer{}, MaxPool2x2{},
                FlattenLayer{}, std::move(fc)};
    p.validate();
    return p;
}

EncoderParams make_affine_encoder(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    EncoderParams p;
    p.input_h = 1;
    p.input_w = 1;
    p.input_ch = in_dim;
    p.output_dim = out_dim;
    Affine fc{in_dim, out_dim, Tensor({in_dim, out_dim}), Tensor({out_dim})};
    fill_he_uniform(fc.weights, in_dim, rng);
    p.layers = {FlattenLayer{}, std::move(fc)};
    p.validate();
    return p;
}

namespace {

Tensor conv_forward(const Conv3x3& conv, const Tensor& in) {
    const std::size_t B = in.shape[0], H = in.shape[1], W = in.shape[2], Ci = in.shape[3];
    const std::size_t Co = conv.out_ch;
    Tensor out({B, H, W, Co});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double* op = &out.data[((b * H + y) * W + x) * Co];
                for (std::size_t o = 0; o < Co; ++o) op[o] = conv.bias[o];
                for (int dy = -1; dy <= 1; ++dy) {
                    const long yy = static_cast<long>(y) + dy;
                    if (yy < 0 || yy >= static_cast<long>(H)) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long xx = static_cast<long>(x) + dx;
                        if (xx < 0 || xx >= static_cast<long>(W)) continue;
                        const double* ip = &in.data[((b * H + yy) * W + xx) * Ci];
                        const double* wp =
                            &conv.weights.data[(((dy + 1) * 3) + (dx + 1)) * Ci * Co];
                        for (std::size_t i = 0; i < Ci; ++i) {
                            const double iv = ip[i];
                            const double* wrow = wp + i * Co;
                            for (std::size_t o = 0; o < Co; ++o) op[o] += iv * wrow[o];
                        }
                    }
                }
            }
        }
    }
    return out;
}

void conv_backward(const Conv3x3& conv, const Tensor& in, const Tensor& grad_out,
                   Conv3x3& grads, Tensor& grad_in) {
    const std::size_t B = in.shape[0], H = in.shape[1], W = in.shape[2], Ci = in.shape[3];
    const std::size_t Co = conv.out_ch;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const double* gp = &grad_out.data[((b * H + y) * W + x) * Co];
                for (std::size_t o = 0; o < Co; ++o) grads.bias[o] += gp[o];
                for (int dy = -1; dy <= 1; ++dy) {
                    const long yy = static_cast<long>(y) + dy;
                    if (yy < 0 || yy >= static_cast<long>(H)) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long xx = static_cast<long>(x) + dx;
                        if (xx < 0 || xx >= static_cast<long>(W)) continue;
                        const double* ip = &in.data[((b * H + yy) * W + xx) * Ci];
                        double* gip = &grad_in.data[((b * H + yy) * W + xx) * Ci];
                        const std::size_t wbase = (((dy + 1) * 3) + (dx + 1)) * Ci * Co;
                        for (std::size_t i = 0; i < Ci; ++i) {
                            const double iv = ip[i];
                            const double* wrow = &conv.weights.data[wbase + i * Co];
                            double* gwrow = &grads.weights.data[wbase + i * Co];
                            double gi = 0.0;
                            for (std::size_t o = 0; o < Co; ++o) {
                                gwrow[o] += iv * gp[o];
                                gi += wrow[o] * gp[o];
                            }
                            gip[i] += gi;
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor encoder_forward(const EncoderParams& params, const Tensor& batch, EncoderTape& tape) {
    params.validate();
    tape.inputs.clear();
    tape.pool_argmax.clear();
    tape.consumed = false;

    Tensor cur = batch;
    cur.require_finite("encoder_forward input");
    for (const auto& layer : params.layers) {
        tape.inputs.push_back(cur);
        if (const auto* conv = std::get_if<Conv3x3>(&layer)) {
            cur = conv_forward(*conv, cur);
        } else if (std::holds_alternative<ReLULayer>(layer)) {
            Tensor out = cur;
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            cur = std::move(out);
        } else if (std::holds_alternative<MaxPool2x2>(layer)) {
            const std::size_t B = cur.shape[0], H = cur.shape[1], W = cur.shape[2],
                              C = cur.shape[3];
            Tensor out({B, H / 2, W / 2, C});
            std::vector<std::size_t> argmax(out.numel());
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t y = 0; y < H / 2; ++y)
                    for (std::size_t x = 0; x < W / 2; ++x)
                        for (std::size_t c = 0; c < C; ++c) {
                            double best = -1e300;
                            std::size_t best_idx = 0;
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    const std::size_t idx =
                                        ((b * H + 2 * y + dy) * W + 2 * x + dx) * C + c;
                                    if (cur.data[idx] > best) {
                                        best = cur.data[idx];
                                        best_idx = idx;
                                    }
                                }
                            const std::size_t oidx = ((b * (H / 2) + y) * (W / 2) + x) * C + c;
                            out.data[oidx] = best;
                            argmax[oidx] = best_idx;
                        }
            tape.pool_argmax.push_back(std::move(argmax));
            cur = std::move(out);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            const std::size_t B = cur.shape[0];
            const std::size_t flat = cur.numel() / B;
            cur = Tensor({B, flat}, std::move(cur.data));
        } else if (const auto* aff = std::get_if<Affine>(&layer)) {
            const std::size_t B = cur.shape[0];
            Tensor out({B, aff->out_dim});
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t o = 0; o < aff->out_dim; ++o) out.at2(b, o) = aff->bias[o];
                for (std::size_t i = 0; i < aff->in_dim; ++i) {
                    const double iv = cur.at2(b, i);
                    const double* wrow = &aff->weights.data[i * aff->out_dim];
                    double* orow = &out.data[b * aff->out_dim];
                    for (std::size_t o = 0; o < aff->out_dim; ++o) orow[o] += iv * wrow[o];
                }
            }
            cur = std::move(out);
        }
    }
    return cur;
}

EncoderGrads zero_grads_like(const EncoderParams& params) {
    EncoderGrads g;
    for (const auto& layer : params.layers) {
        if (const auto* c = std::get_if<Conv3x3>(&layer)) {
            g.layers.push_back(Conv3x3{c->in_ch, c->out_ch, Tensor(c->weights.shape),
                                       Tensor(c->bias.shape)});
        } else if (const auto* a = std::get_if<Affine>(&layer)) {
            g.layers.push_back(Affine{a->in_dim, a->out_dim, Tensor(a->weights.shape),
                                      Tensor(a->bias.shape)});
        } else {
            g.layers.push_back(layer);
        }
    }
    return g;
}

EncoderGrads encoder_backward(const EncoderParams& params, EncoderTape& tape,
                              const Tensor& grad_descriptors, Tensor* grad_input) {
    if (tape.consumed) throw std::logic_error("encoder_backward: tape already consumed");
    if (tape.inputs.size() != params.layers.size()) {
        throw std::logic_error("encoder_backward: tape does not match params");
    }
    tape.consumed = true;

    EncoderGrads grads = zero_grads_like(params);
    Tensor g = grad_descriptors;
    std::size_t pool_pos = tape.pool_argmax.size();
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& layer = params.layers[li];
        const Tensor& in = tape.inputs[li];
        if (const auto* conv = std::get_if<Conv3x3>(&layer)) {
            Tensor gin(in.shape);
            conv_backward(*conv, in, g, std::get<Conv3x3>(grads.layers[li]), gin);
            g = std::move(gin);
        } else if (std::holds_alternative<ReLULayer>(layer)) {
            Tensor gin(in.shape);
            for (std::size_t i = 0; i < in.numel(); ++i) {
                gin.data[i] = in.data[i] > 0.0 ? g.data[i] : 0.0;
            }
            g = std::move(gin);
        } else if (std::holds_alternative<MaxPool2x2>(layer)) {
            --pool_pos;
            const auto& argmax = tape.pool_argmax[pool_pos];
            Tensor gin(in.shape);
            for (std::size_t i = 0; i < argmax.size(); ++i) gin.data[argmax[i]] += g.data[i];
            g = std::move(gin);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            g = Tensor(in.shape, std::move(g.data));
        } else if (const auto* aff = std::get_if<Affine>(&layer)) {
            auto& agrad = std::get<Affine>(grads.layers[li]);
            const std::size_t B = in.shape[0];
            Tensor gin(in.shape);
            for (std::size_t b = 0; b < B; ++b) {
                const double* grow = &g.data[b * aff->out_dim];
                for (std::size_t o = 0; o < aff->out_dim; ++o) agrad.bias[o] += grow[o];
                for (std::size_t i = 0; i < aff->in_dim; ++i) {
                    const double iv = in.at2(b, i);
                    const double* wrow = &aff->weights.data[i * aff->out_dim];
                    double* gwrow = &agrad.weights.data[i * aff->out_dim];
                    double gi = 0.0;
                    for (std::size_t o = 0; o < aff->out_dim; ++o) {
                        gwrow[o] += iv * grow[o];
                        gi += wrow[o] * grow[o];
                    }
                    gin.at2(b, i) = gi;
                }
            }
            g = std::move(gin);
        }
    }
    if (grad_input) *grad_input = std::move(g);
    return grads;
}

Tensor passthrough(const Tensor& batch, std::size_t expected_dim) {
    if (batch.rank() != 2 || batch.shape[1] != expected_dim) {
        throw std::invalid_argument("passthrough: expected [B,D] with matching D");
    }
    return batch;
}

}  // namespace spq
