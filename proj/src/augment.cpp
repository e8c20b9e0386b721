#include "spq/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spq {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void clamp_image(Image& img) {
    for (double& p : img.pixels) p = clamp01(p);
}

double mean_luma(const Image& img) {
    double s = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        s += luma(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]);
    }
    return s / (static_cast<double>(img.height) * static_cast<double>(img.width));
}

void apply_brightness(Image& img, double factor) {
    for (double& p : img.pixels) p = clamp01(p * factor);
}

void apply_contrast(Image& img, double factor) {
    const double m = mean_luma(img);
    for (double& p : img.pixels) p = clamp01(m + factor * (p - m));
}

void apply_saturation(Image& img, double factor) {
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        const double l = luma(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]);
        for (int c = 0; c < 3; ++c) {
            img.pixels[i + c] = clamp01(l + factor * (img.pixels[i + c] - l));
        }
    }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx == 0.0 ? 0.0 : d / mx;
    if (d == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = std::fmod((g - b) / d, 6.0) / 6.0;
    } else if (mx == g) {
        h = ((b - r) / d + 2.0) / 6.0;
    } else {
        h = ((r - g) / d + 4.0) / 6.0;
    }
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double hh = h * 6.0;
    const int i = static_cast<int>(std::floor(hh)) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Hue shift in turns of the HSV circle.
void apply_hue(Image& img, double shift) {
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        double h, s, v;
        rgb_to_hsv(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2], h, s, v);
        h = std::fmod(h + shift + 1.0, 1.0);
        hsv_to_rgb(h, s, v, img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]);
    }
    clamp_image(img);
}

}  // namespace

double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

void AugmentConfig::validate() const {
    auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(crop_scale_range[0] > 0.0 && crop_scale_range[0] <= crop_scale_range[1] &&
          crop_scale_range[1] <= 1.0)) {
        throw std::invalid_argument("AugmentConfig: bad crop_scale_range");
    }
    if (!(crop_aspect_range[0] > 0.0 && crop_aspect_range[0] <= crop_aspect_range[1])) {
        throw std::invalid_argument("AugmentConfig: bad crop_aspect_range");
    }
    if (!prob_ok(flip_prob) || !prob_ok(jitter_prob) || !prob_ok(grayscale_prob) ||
        !prob_ok(blur_prob)) {
        throw std::invalid_argument("AugmentConfig: probability out of [0,1]");
    }
    if (jitter_strength < 0.0) {
        throw std::invalid_argument("AugmentConfig: negative jitter_strength");
    }
    if (!(blur_sigma_range[0] > 0.0 && blur_sigma_range[0] <= blur_sigma_range[1])) {
        throw std::invalid_argument("AugmentConfig: bad blur_sigma_range");
    }
    if (output_h == 0 || output_w == 0) {
        throw std::invalid_argument("AugmentConfig: zero output size");
    }
}

AugmentConfig AugmentConfig::identity(std::size_t h, std::size_t w) {
    AugmentConfig cfg;
    cfg.crop_scale_range = {1.0, 1.0};
    cfg.crop_aspect_range = {1.0, 1.0};
    cfg.flip_prob = 0.0;
    cfg.jitter_prob = 0.0;
    cfg.grayscale_prob = 0.0;
    cfg.blur_prob = 0.0;
    cfg.output_h = h;
    cfg.output_w = w;
    return cfg;
}

Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > img.height || x0 + w > img.width || h == 0 || w == 0) {
        throw std::invalid_argument("crop: window out of bounds");
    }
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
        }
    }
    return out;
}

// Bilinear, half-pixel centers, clamped at borders.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
    Image out(out_h, out_w);
    const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
    const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const double fy0 = std::floor(fy);
        const double wy = fy - fy0;
        const std::size_t y0 = static_cast<std::size_t>(std::clamp<double>(fy0, 0, img.height - 1.0));
        const std::size_t y1 = static_cast<std::size_t>(std::clamp<double>(fy0 + 1, 0, img.height - 1.0));
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const double fx0 = std::floor(fx);
            const double wx = fx - fx0;
            const std::size_t x0 = static_cast<std::size_t>(std::clamp<double>(fx0, 0, img.width - 1.0));
            const std::size_t x1 = static_cast<std::size_t>(std::clamp<double>(fx0 + 1, 0, img.width - 1.0));
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
                const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
                out.at(y, x, c) = clamp01((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

Image hflip(const Image& img) {
    Image out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
        }
    }
    return out;
}

Image to_grayscale(const Image& img) {
    Image out(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        const double l = luma(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]);
        out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = clamp01(l);
    }
    return out;
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    std::size_t radius = static_cast<std::size_t>(
        std::ceil(0.1 * static_cast<double>(std::min(img.height, img.width))));
    if (radius == 0) radius = 1;
    if (radius % 2 == 0) ++radius;
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += kernel[i];
    }
    for (double& k : kernel) k /= sum;

    const auto clampi = [](long v, long hi) { return std::clamp<long>(v, 0, hi); };
    Image tmp(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < kernel.size(); ++i) {
                    const long xs = clampi(static_cast<long>(x) + static_cast<long>(i) -
                                               static_cast<long>(radius),
                                           static_cast<long>(img.width) - 1);
                    acc += kernel[i] * img.at(y, static_cast<std::size_t>(xs), c);
                }
                tmp.at(y, x, c) = acc;
            }
        }
    }
    Image out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < kernel.size(); ++i) {
                    const long ys = clampi(static_cast<long>(y) + static_cast<long>(i) -
                                               static_cast<long>(radius),
                                           static_cast<long>(img.height) - 1);
                    acc += kernel[i] * tmp.at(static_cast<std::size_t>(ys), x, c);
                }
                out.at(y, x, c) = clamp01(acc);
            }
        }
    }
    return out;
}

Image sample_view(const Image& img, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    if (img.height < 4 || img.width < 4) {
        throw std::invalid_argument("sample_view: image smaller than 4x4");
    }

    // Random resized crop; degenerate windows retried, then full image.
    Image cropped;
    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
        const double scale = rng.uniform(cfg.crop_scale_range[0], cfg.crop_scale_range[1]);
        const double aspect = std::exp(rng.uniform(std::log(cfg.crop_aspect_range[0]),
                                                   std::log(cfg.crop_aspect_range[1])));
        const double area = scale * static_cast<double>(img.height) *
                            static_cast<double>(img.width);
        const auto h = static_cast<long>(std::llround(std::sqrt(area / aspect)));
        const auto w = static_cast<long>(std::llround(std::sqrt(area * aspect)));
        if (h < 1 || w < 1 || h > static_cast<long>(img.height) ||
            w > static_cast<long>(img.width)) {
            continue;
        }
        const std::size_t y0 = rng.uniform_index(img.height - static_cast<std::size_t>(h) + 1);
        const std::size_t x0 = rng.uniform_index(img.width - static_cast<std::size_t>(w) + 1);
        cropped = crop(img, y0, x0, static_cast<std::size_t>(h), static_cast<std::size_t>(w));
        placed = true;
    }
    if (!placed) cropped = img;
    Image out = resize_bilinear(cropped, cfg.output_h, cfg.output_w);

    if (rng.bernoulli(cfg.flip_prob)) out = hflip(out);

    if (rng.bernoulli(cfg.jitter_prob)) {
        const double s = cfg.jitter_strength;
        const double fb = rng.uniform(1.0 - 0.8 * s, 1.0 + 0.8 * s);
        const double fc = rng.uniform(1.0 - 0.8 * s, 1.0 + 0.8 * s);
        const double fs = rng.uniform(1.0 - 0.8 * s, 1.0 + 0.8 * s);
        const double hshift = rng.uniform(-0.2 * s, 0.2 * s);
        std::vector<int> order{0, 1, 2, 3};
        rng.shuffle(order);
        for (int op : order) {
            switch (op) {
                case 0: apply_brightness(out, fb); break;
                case 1: apply_contrast(out, fc); break;
                case 2: apply_saturation(out, fs); break;
                default: apply_hue(out, hshift); break;
            }
        }
    }

    if (rng.bernoulli(cfg.grayscale_prob)) out = to_grayscale(out);

    if (rng.bernoulli(cfg.blur_prob)) {
        const double sigma = rng.uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1]);
        out = gaussian_blur(out, sigma);
    }
    return out;
}

std::pair<Image, Image> make_view_pair(const Image& img, const AugmentConfig& cfg,
                                       Rng& rng_a, Rng& rng_b) {
    return {sample_view(img, cfg, rng_a), sample_view(img, cfg, rng_b)};
}

Image image_from_tensor_hwc(const Tensor& t) {
    if (t.rank() != 3 || t.shape[2] != 3) {
        throw std::invalid_argument("image_from_tensor_hwc: expected [H,W,3]");
    }
    Image img(t.shape[0], t.shape[1]);
    img.pixels = t.data;
    return img;
}

Tensor tensor_from_image(const Image& img) {
    return Tensor({img.height, img.width, 3}, img.pixels);
}

}  // namespace spq
