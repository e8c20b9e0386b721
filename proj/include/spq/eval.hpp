#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spq/index.hpp"
#include "spq/pq_head.hpp"
#include "spq/tensor.hpp"

namespace spq {

// Single-label mode compares label values; multi-label mode intersects
// per-item bitmasks (relevant iff at least one label matches).
struct RelevanceOracle {
    std::vector<std::uint64_t> query_labels;
    std::vector<std::uint64_t> gallery_labels;
    bool multi_label = false;

    bool relevant(std::size_t query, std::size_t item) const {
        if (multi_label) return (query_labels[query] & gallery_labels[item]) != 0;
        return query_labels[query] == gallery_labels[item];
    }
    void validate() const;
};

struct PrPoint {
    std::size_t cutoff;
    double recall;
    double precision;
};

struct MetricReport {
    double map_at_r = 0.0;
    std::size_t r = 0;
    std::vector<std::pair<std::size_t, double>> precision_at_k;
    std::vector<PrPoint> pr_curve;
    std::string config_echo;

    std::string to_text() const;
    std::string to_csv() const;        // metric,k_or_r,value
    std::string pr_curve_csv() const;  // cutoff,recall,precision
};

enum class ApDenominator {
    min_total_r,  // min(total_relevant, R); the default mAP@R convention
    rank_r,       // plain R
};

// AP over the first R ranks of a relevance flag list.
double average_precision(const std::vector<bool>& ranked_relevance, std::size_t r,
                         std::size_t total_relevant,
                         ApDenominator denom = ApDenominator::min_total_r);

// Per-query work is independent; threads > 1 splits the query set into
// fixed blocks and reduces in query order, so the report is deterministic.
MetricReport evaluate(const IndexFile& index, const Tensor& queries,
                      const RelevanceOracle& oracle, std::size_t r,
                      const std::vector<std::size_t>& k_list,
                      ApDenominator denom = ApDenominator::min_total_r,
                      std::size_t threads = 1);

// Classical PQ: per-subspace Lloyd's k-means with k-means++ seeding.
// Empty clusters are re-seeded to the farthest point.
CodebookSet kmeans_pq_baseline(const Tensor& gallery, std::size_t m, std::size_t k,
                               std::size_t iters, std::uint64_t seed,
                               std::vector<double>* objective_trace = nullptr);

}  // namespace spq
