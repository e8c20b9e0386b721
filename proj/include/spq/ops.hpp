#pragma once

#include <cstddef>
#include <span>

#include "spq/tensor.hpp"

namespace spq {

double squared_euclidean(std::span<const double> a, std::span<const double> b);
double squared_euclidean(const Tensor& a, const Tensor& b);

// aᵀb / (‖a‖‖b‖). Zero-norm inputs are an error, not a convention.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Tensor& a, const Tensor& b);

// Max-subtracted softmax of v / temperature.
Tensor softmax(const Tensor& v, double temperature);
void softmax_inplace(std::span<const double> v, double temperature, std::span<double> out);

// log Σ exp(v_i), max-subtracted.
double log_sum_exp(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace spq
