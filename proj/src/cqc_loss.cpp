#include "spq/cqc_loss.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spq/ops.hpp"

namespace spq {

void CqcConfig::validate() const {
    if (tau_cqc <= 0.0) throw std::invalid_argument("CqcConfig: tau_cqc must be > 0");
}

namespace {

void check_stacks(const Tensor& x_hat, const Tensor& z_hat) {
    if (x_hat.rank() != 2 || z_hat.rank() != 2 || !x_hat.same_shape(z_hat)) {
        throw std::invalid_argument("cqc: stacks must be matching [2N_B, D]");
    }
    if (x_hat.shape[0] % 2 != 0 || x_hat.shape[0] < 2) {
        throw std::invalid_argument("cqc: stack row count must be even and >= 2");
    }
}

std::vector<double> row_norms(const Tensor& t) {
    std::vector<double> norms(t.shape[0]);
    for (std::size_t r = 0; r < t.shape[0]; ++r) {
        norms[r] = l2_norm(std::span<const double>(&t.data[r * t.shape[1]], t.shape[1]));
        if (norms[r] == 0.0) throw std::invalid_argument("cqc: zero-norm row");
    }
    return norms;
}

// Directed pair loss over one similarity row, plus optional dl/dS row.
double row_loss(const double* s_row, std::size_t n_b, std::size_t pos,
                const CqcConfig& cfg, double* grad_row) {
    const double tau = cfg.tau_cqc;
    std::vector<double> v;
    std::vector<std::size_t> cols;
    v.reserve(n_b);
    for (std::size_t m = 0; m < n_b; ++m) {
        if (!cfg.include_positive_in_denominator && m == pos) continue;
        v.push_back(s_row[m] / tau);
        cols.push_back(m);
    }
    if (v.empty()) {
        throw std::invalid_argument("cqc: empty denominator (N_B too small)");
    }
    const double lse = log_sum_exp(v);
    const double loss = -s_row[pos] / tau + lse;
    if (grad_row) {
        for (std::size_t t = 0; t < cols.size(); ++t) {
            grad_row[cols[t]] += std::exp(v[t] - lse) / tau;
        }
        grad_row[pos] -= 1.0 / tau;
    }
    return loss;
}

}  // namespace

CrossSimMatrix cross_similarities(const Tensor& x_hat, const Tensor& z_hat) {
    check_stacks(x_hat, z_hat);
    const std::size_t n_b = x_hat.shape[0] / 2;
    const std::size_t d = x_hat.shape[1];
    CrossSimMatrix sims;
    sims.n_b = n_b;
    sims.s_odd_even = Tensor({n_b, n_b});
    sims.s_even_odd = Tensor({n_b, n_b});
    for (std::size_t i = 0; i < n_b; ++i) {
        for (std::size_t j = 0; j < n_b; ++j) {
            sims.s_odd_even.at2(i, j) = cosine_similarity(
                std::span<const double>(&x_hat.data[(2 * i) * d], d),
                std::span<const double>(&z_hat.data[(2 * j + 1) * d], d));
            sims.s_even_odd.at2(i, j) = cosine_similarity(
                std::span<const double>(&x_hat.data[(2 * i + 1) * d], d),
                std::span<const double>(&z_hat.data[(2 * j) * d], d));
        }
    }
    return sims;
}

double pair_loss(const CrossSimMatrix& sims, std::size_t i, std::size_t j,
                 const CqcConfig& cfg) {
    cfg.validate();
    if (i == 0 || j == 0 || i > 2 * sims.n_b || j > 2 * sims.n_b) {
        throw std::invalid_argument("pair_loss: view index out of range");
    }
    if (i % 2 == j % 2) {
        throw std::invalid_argument("pair_loss: correlated pairs have opposite parity");
    }
    if ((i - 1) / 2 != (j - 1) / 2) {
        throw std::invalid_argument("pair_loss: (i,j) is not a correlated pair");
    }
    if (j % 2 == 0) {
        const std::size_t row = (i - 1) / 2;
        const std::size_t pos = j / 2 - 1;
        return row_loss(&sims.s_odd_even.data[row * sims.n_b], sims.n_b, pos, cfg, nullptr);
    }
    const std::size_t row = i / 2 - 1;
    const std::size_t pos = (j - 1) / 2;
    return row_loss(&sims.s_even_odd.data[row * sims.n_b], sims.n_b, pos, cfg, nullptr);
}

double batch_loss(const CrossSimMatrix& sims, const CqcConfig& cfg) {
    cfg.validate();
    double total = 0.0;
    for (std::size_t n = 1; n <= sims.n_b; ++n) {
        total += pair_loss(sims, 2 * n - 1, 2 * n, cfg);
        total += pair_loss(sims, 2 * n, 2 * n - 1, cfg);
    }
    return total / (2.0 * static_cast<double>(sims.n_b));
}

double loss_and_backward(const Tensor& x_hat, const Tensor& z_hat, const CqcConfig& cfg,
                         Tensor& grad_x_hat, Tensor& grad_z_hat) {
    cfg.validate();
    check_stacks(x_hat, z_hat);
    const std::size_t n_b = x_hat.shape[0] / 2;
    const std::size_t d = x_hat.shape[1];
    const auto nx = row_norms(x_hat);
    const auto nz = row_norms(z_hat);

    CrossSimMatrix sims = cross_similarities(x_hat, z_hat);

    Tensor g_oe({n_b, n_b});
    Tensor g_eo({n_b, n_b});
    double total = 0.0;
    for (std::size_t r = 0; r < n_b; ++r) {
        total += row_loss(&sims.s_odd_even.data[r * n_b], n_b, r, cfg,
                          &g_oe.data[r * n_b]);
        total += row_loss(&sims.s_even_odd.data[r * n_b], n_b, r, cfg,
                          &g_eo.data[r * n_b]);
    }
    const double scale = 1.0 / (2.0 * static_cast<double>(n_b));
    total *= scale;

    grad_x_hat = Tensor(x_hat.shape);
    grad_z_hat = Tensor(z_hat.shape);
    auto chain = [&](double g_s, double s, std::size_t xa, std::size_t zb) {
        if (g_s == 0.0) return;
        const double inv = 1.0 / (nx[xa] * nz[zb]);
        const double* xr = &x_hat.data[xa * d];
        const double* zr = &z_hat.data[zb * d];
        double* gx = &grad_x_hat.data[xa * d];
        double* gz = &grad_z_hat.data[zb * d];
        const double cx = s / (nx[xa] * nx[xa]);
        const double cz = s / (nz[zb] * nz[zb]);
        for (std::size_t t = 0; t < d; ++t) {
            gx[t] += g_s * (zr[t] * inv - cx * xr[t]);
            gz[t] += g_s * (xr[t] * inv - cz * zr[t]);
        }
    };
    for (std::size_t r = 0; r < n_b; ++r) {
        for (std::size_t c = 0; c < n_b; ++c) {
            chain(scale * g_oe.at2(r, c), sims.s_odd_even.at2(r, c), 2 * r, 2 * c + 1);
            chain(scale * g_eo.at2(r, c), sims.s_even_odd.at2(r, c), 2 * r + 1, 2 * c);
        }
    }
    return total;
}

}  // namespace spq
