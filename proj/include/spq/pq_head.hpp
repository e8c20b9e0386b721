#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spq/tensor.hpp"

namespace spq {

// M codebooks of K codewords each; codeword dimension is D/M.
struct CodebookSet {
    std::size_t num_books = 0;      // M
    std::size_t num_codewords = 0;  // K, power of two
    std::size_t subdim = 0;         // D/M
    Tensor codewords;               // [M,K,subdim]

    CodebookSet() = default;
    CodebookSet(std::size_t m, std::size_t k, std::size_t sub);

    std::size_t dim() const { return num_books * subdim; }
    std::size_t code_bits() const;  // M * log2(K)

    const double* codeword(std::size_t m, std::size_t k) const {
        return &codewords.data[(m * num_codewords + k) * subdim];
    }
    double* codeword(std::size_t m, std::size_t k) {
        return &codewords.data[(m * num_codewords + k) * subdim];
    }

    void validate() const;

    // i.i.d. N(0, 1/subdim) entries.
    static CodebookSet random_init(std::size_t m, std::size_t k, std::size_t sub, Rng& rng);
};

struct SoftAssignTape {
    std::size_t batch = 0;
    Tensor weights;  // [B,M,K] softmax rows
    bool consumed = false;
};

// Soft quantizer: per subspace, softmax over negative scaled squared
// distances, convex combination of codewords, sub-results concatenated with
// no intra-normalization.
Tensor soft_quantize(const CodebookSet& cb, const Tensor& descriptors, double tau_q,
                     SoftAssignTape& tape);

void soft_quantize_backward(SoftAssignTape& tape, const CodebookSet& cb,
                            const Tensor& descriptors, double tau_q,
                            const Tensor& grad_quantized, Tensor& grad_codewords,
                            Tensor& grad_descriptors);

// indices[n*M + m] = argmin_k distance; ties broken by lowest index.
std::vector<std::uint32_t> hard_assign(const CodebookSet& cb, const Tensor& descriptors);

Tensor reconstruct(const CodebookSet& cb, const std::vector<std::uint32_t>& indices,
                   std::size_t batch);

}  // namespace spq
