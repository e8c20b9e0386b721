#pragma once

#include <cstddef>

#include "spq/tensor.hpp"

namespace spq {

struct CqcConfig {
    double tau_cqc = 0.5;
    // Default false matches the written loss: the indicator drops the
    // correlated term from the denominator, so pair losses may go negative.
    bool include_positive_in_denominator = false;

    void validate() const;
};

// Cross-similarities between descriptor and quantized stacks of opposite
// views. Views are interleaved: stack row 2n-2 is view 2n-1, row 2n-1 is
// view 2n (1-based view indices).
struct CrossSimMatrix {
    std::size_t n_b = 0;
    Tensor s_odd_even;  // (i,j): cos(x_hat_{2i-1}, z_hat_{2j})
    Tensor s_even_odd;  // (i,j): cos(x_hat_{2i}, z_hat_{2j-1})
};

CrossSimMatrix cross_similarities(const Tensor& x_hat, const Tensor& z_hat);

// One directed pair loss; i and j are 1-based view indices of opposite
// parity forming a correlated pair {2n-1, 2n}.
double pair_loss(const CrossSimMatrix& sims, std::size_t i, std::size_t j,
                 const CqcConfig& cfg);

// Mean over the 2*N_B directed pairs, scaled by 1/(2*N_B).
double batch_loss(const CrossSimMatrix& sims, const CqcConfig& cfg);

// Full loss with exact gradients w.r.t. both stacks [2N_B, D].
// Returns the batch loss.
double loss_and_backward(const Tensor& x_hat, const Tensor& z_hat, const CqcConfig& cfg,
                         Tensor& grad_x_hat, Tensor& grad_z_hat);

}  // namespace spq
