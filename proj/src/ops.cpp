#include "spq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spq {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_euclidean(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("squared_euclidean: dimension mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double squared_euclidean(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("squared_euclidean: shape mismatch");
    }
    return squared_euclidean(std::span<const double>(a.data),
                             std::span<const double>(b.data));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("cosine_similarity: zero-norm input");
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    return cosine_similarity(std::span<const double>(a.data),
                             std::span<const double>(b.data));
}

void softmax_inplace(std::span<const double> v, double temperature,
                     std::span<double> out) {
    if (temperature <= 0.0) {
        throw std::invalid_argument("softmax: temperature must be > 0");
    }
    if (v.empty() || v.size() != out.size()) {
        throw std::invalid_argument("softmax: bad sizes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
        mx = std::max(mx, x / temperature);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] / temperature - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] /= sum;
}

Tensor softmax(const Tensor& v, double temperature) {
    Tensor out(v.shape);
    softmax_inplace(std::span<const double>(v.data), temperature,
                    std::span<double>(out.data));
    return out;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace spq
