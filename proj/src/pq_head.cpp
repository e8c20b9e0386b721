#include "spq/pq_head.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "spq/ops.hpp"

namespace spq {

namespace {

bool is_power_of_two(std::size_t k) { return k > 0 && (k & (k - 1)) == 0; }

}  // namespace

CodebookSet::CodebookSet(std::size_t m, std::size_t k, std::size_t sub)
    : num_books(m), num_codewords(k), subdim(sub), codewords({m, k, sub}) {
    validate();
}

std::size_t CodebookSet::code_bits() const {
    std::size_t bits = 0;
    for (std::size_t k = num_codewords; k > 1; k >>= 1) ++bits;
    return num_books * bits;
}

void CodebookSet::validate() const {
    if (num_books == 0 || subdim == 0) {
        throw std::invalid_argument("CodebookSet: empty configuration");
    }
    if (!is_power_of_two(num_codewords)) {
        throw std::invalid_argument("CodebookSet: K must be a power of two");
    }
    if (codewords.shape != std::vector<std::size_t>{num_books, num_codewords, subdim}) {
        throw std::invalid_argument("CodebookSet: codeword tensor shape mismatch");
    }
    codewords.require_finite("CodebookSet");
}

CodebookSet CodebookSet::random_init(std::size_t m, std::size_t k, std::size_t sub, Rng& rng) {
    CodebookSet cb(m, k, sub);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(sub));
    for (double& v : cb.codewords.data) v = rng.normal(0.0, sigma);
    return cb;
}

Tensor soft_quantize(const CodebookSet& cb, const Tensor& descriptors, double tau_q,
                     SoftAssignTape& tape) {
    cb.validate();
    if (tau_q <= 0.0) throw std::invalid_argument("soft_quantize: tau_q must be > 0");
    if (descriptors.rank() != 2 || descriptors.shape[1] != cb.dim()) {
        throw std::invalid_argument("soft_quantize: descriptor dim mismatch");
    }
    descriptors.require_finite("soft_quantize input");

    const std::size_t B = descriptors.shape[0];
    const std::size_t M = cb.num_books, K = cb.num_codewords, S = cb.subdim;
    tape.batch = B;
    tape.weights = Tensor({B, M, K});
    tape.consumed = false;

    Tensor out({B, M * S});
    std::vector<double> neg_dist(K);
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            const double* x = &descriptors.data[n * M * S + m * S];
            for (std::size_t k = 0; k < K; ++k) {
                neg_dist[k] = -squared_euclidean(std::span<const double>(x, S),
                                                 std::span<const double>(cb.codeword(m, k), S));
            }
            double* w = &tape.weights.data[(n * M + m) * K];
            softmax_inplace(neg_dist, tau_q, std::span<double>(w, K));
            double* z = &out.data[n * M * S + m * S];
            for (std::size_t k = 0; k < K; ++k) {
                const double* c = cb.codeword(m, k);
                for (std::size_t d = 0; d < S; ++d) z[d] += w[k] * c[d];
            }
        }
    }
    return out;
}

void soft_quantize_backward(SoftAssignTape& tape, const CodebookSet& cb,
                            const Tensor& descriptors, double tau_q,
                            const Tensor& grad_quantized, Tensor& grad_codewords,
                            Tensor& grad_descriptors) {
    if (tape.consumed) throw std::logic_error("soft_quantize_backward: tape already consumed");
    tape.consumed = true;
    const std::size_t B = tape.batch;
    const std::size_t M = cb.num_books, K = cb.num_codewords, S = cb.subdim;
    if (grad_quantized.shape != std::vector<std::size_t>{B, M * S}) {
        throw std::invalid_argument("soft_quantize_backward: grad shape mismatch");
    }

    grad_codewords = Tensor(cb.codewords.shape);
    grad_descriptors = Tensor(descriptors.shape);

    std::vector<double> dldd(K);  // dL/d(squared distance to codeword k)
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            const double* x = &descriptors.data[n * M * S + m * S];
            const double* g = &grad_quantized.data[n * M * S + m * S];
            const double* w = &tape.weights.data[(n * M + m) * K];
            double* gx = &grad_descriptors.data[n * M * S + m * S];

            // a_k = g . c_k, abar = sum_k w_k a_k
            double abar = 0.0;
            std::vector<double> a(K);
            for (std::size_t k = 0; k < K; ++k) {
                a[k] = dot(std::span<const double>(g, S),
                           std::span<const double>(cb.codeword(m, k), S));
                abar += w[k] * a[k];
            }
            for (std::size_t k = 0; k < K; ++k) {
                dldd[k] = -(w[k] * (a[k] - abar)) / tau_q;
            }
            for (std::size_t k = 0; k < K; ++k) {
                const double* c = cb.codeword(m, k);
                double* gc = &grad_codewords.data[(m * K + k) * S];
                for (std::size_t d = 0; d < S; ++d) {
                    const double diff = x[d] - c[d];
                    // direct convex-combination term + distance term
                    gc[d] += w[k] * g[d] - 2.0 * dldd[k] * diff;
                    gx[d] += 2.0 * dldd[k] * diff;
                }
            }
        }
    }
}

std::vector<std::uint32_t> hard_assign(const CodebookSet& cb, const Tensor& descriptors) {
    cb.validate();
    if (descriptors.rank() != 2 || descriptors.shape[1] != cb.dim()) {
        throw std::invalid_argument("hard_assign: descriptor dim mismatch");
    }
    const std::size_t B = descriptors.shape[0];
    const std::size_t M = cb.num_books, K = cb.num_codewords, S = cb.subdim;
    std::vector<std::uint32_t> indices(B * M);
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            const double* x = &descriptors.data[n * M * S + m * S];
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_k = 0;
            for (std::size_t k = 0; k < K; ++k) {
                const double d = squared_euclidean(std::span<const double>(x, S),
                                                   std::span<const double>(cb.codeword(m, k), S));
                if (d < best) {
                    best = d;
                    best_k = static_cast<std::uint32_t>(k);
                }
            }
            indices[n * M + m] = best_k;
        }
    }
    return indices;
}

Tensor reconstruct(const CodebookSet& cb, const std::vector<std::uint32_t>& indices,
                   std::size_t batch) {
    if (indices.size() != batch * cb.num_books) {
        throw std::invalid_argument("reconstruct: index count mismatch");
    }
    const std::size_t M = cb.num_books, S = cb.subdim;
    Tensor out({batch, M * S});
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            const std::uint32_t k = indices[n * M + m];
            if (k >= cb.num_codewords) {
                throw std::runtime_error("reconstruct: codeword index out of range");
            }
            const double* c = cb.codeword(m, k);
            double* z = &out.data[n * M * S + m * S];
            for (std::size_t d = 0; d < S; ++d) z[d] = c[d];
        }
    }
    return out;
}

}  // namespace spq
