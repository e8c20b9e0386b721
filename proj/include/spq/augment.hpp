#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "spq/tensor.hpp"

namespace spq {

// RGB image, row-major HWC, values in [0,1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;  // height * width * 3

    Image() = default;
    Image(std::size_t h, std::size_t w)
        : height(h), width(w), pixels(h * w * 3, 0.0) {}

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * 3 + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }
};

struct AugmentConfig {
    std::array<double, 2> crop_scale_range{0.08, 1.0};
    std::array<double, 2> crop_aspect_range{3.0 / 4.0, 4.0 / 3.0};
    double flip_prob = 0.5;
    double jitter_strength = 0.5;
    double jitter_prob = 0.8;
    double grayscale_prob = 0.2;
    double blur_prob = 0.5;
    std::array<double, 2> blur_sigma_range{0.1, 2.0};
    std::size_t output_h = 32;
    std::size_t output_w = 32;

    void validate() const;

    // Every probability 0, crop scale pinned to 1: the pipeline is the
    // identity when output size matches the input.
    static AugmentConfig identity(std::size_t h, std::size_t w);
};

// One stochastic view: crop -> flip -> jitter -> grayscale -> blur, each
// family fired by its own probability draw.
Image sample_view(const Image& img, const AugmentConfig& cfg, Rng& rng);

std::pair<Image, Image> make_view_pair(const Image& img, const AugmentConfig& cfg,
                                       Rng& rng_a, Rng& rng_b);

// Individual transforms, exposed for tests.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);
Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);
Image hflip(const Image& img);
Image to_grayscale(const Image& img);
Image gaussian_blur(const Image& img, double sigma);
double luma(double r, double g, double b);

Image image_from_tensor_hwc(const Tensor& t);     // [H,W,3]
Tensor tensor_from_image(const Image& img);        // [H,W,3]

}  // namespace spq
