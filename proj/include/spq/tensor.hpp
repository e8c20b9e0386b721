#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace spq {

// Dense row-major tensor of doubles. The training path runs in f64
// throughout; the search path converts to f32 at index-build time.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims)
        : shape(std::move(dims)), data(numel_of(shape), 0.0) {}

    Tensor(std::vector<std::size_t> dims, std::vector<double> values)
        : shape(std::move(dims)), data(std::move(values)) {
        if (numel_of(shape) != data.size()) {
            throw std::invalid_argument("Tensor: shape/data size mismatch");
        }
    }

    static std::size_t numel_of(const std::vector<std::size_t>& dims) {
        std::size_t n = 1;
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
            n *= d;
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 2-D access, row-major.
    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Throws if any value is NaN or Inf.
    void require_finite(const std::string& what) const;
};

// Splittable counter-based generator: every (seed, stream) pair yields an
// independent, platform-stable sequence. Distributions are hand-rolled so
// the bit patterns do not depend on the standard library.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream)
        : state_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

    explicit Rng(std::uint64_t seed) : Rng(seed, 0) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace spq
