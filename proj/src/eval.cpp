#include "spq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "spq/ops.hpp"

namespace spq {

void RelevanceOracle::validate() const {
    if (query_labels.empty() || gallery_labels.empty()) {
        throw std::invalid_argument("RelevanceOracle: empty label sets");
    }
    if (multi_label) {
        for (std::uint64_t l : query_labels) {
            if (l == 0) throw std::invalid_argument("RelevanceOracle: empty query label mask");
        }
        for (std::uint64_t l : gallery_labels) {
            if (l == 0) throw std::invalid_argument("RelevanceOracle: empty gallery label mask");
        }
    }
}

double average_precision(const std::vector<bool>& ranked_relevance, std::size_t r,
                         std::size_t total_relevant, ApDenominator denom) {
    if (total_relevant == 0) return 0.0;
    const std::size_t limit = std::min(r, ranked_relevance.size());
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < limit; ++k) {
        if (ranked_relevance[k]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    const double d = denom == ApDenominator::min_total_r
                         ? static_cast<double>(std::min(total_relevant, r))
                         : static_cast<double>(r);
    return sum / d;
}

namespace {

std::vector<std::size_t> pr_cutoffs(std::size_t n_g) {
    // 1-2-5 decades up to N_g, N_g always included.
    std::vector<std::size_t> cuts;
    for (std::size_t base = 1; base <= n_g; base *= 10) {
        for (std::size_t mult : {1, 2, 5}) {
            const std::size_t c = base * mult;
            if (c < n_g) cuts.push_back(c);
        }
    }
    cuts.push_back(n_g);
    return cuts;
}

}  // namespace

MetricReport evaluate(const IndexFile& index, const Tensor& queries,
                      const RelevanceOracle& oracle, std::size_t r,
                      const std::vector<std::size_t>& k_list, ApDenominator denom,
                      std::size_t threads) {
    index.validate();
    oracle.validate();
    if (queries.rank() != 2 || queries.shape[1] != index.dim) {
        throw std::invalid_argument("evaluate: query dim mismatch");
    }
    if (queries.shape[0] == 0) throw std::logic_error("evaluate: empty query set");
    if (oracle.query_labels.size() != queries.shape[0] ||
        oracle.gallery_labels.size() != index.count) {
        throw std::invalid_argument("evaluate: oracle size mismatch");
    }

    const std::size_t n_q = queries.shape[0];
    const std::size_t n_g = index.count;
    const auto cutoffs = pr_cutoffs(n_g);

    std::vector<double> ap(n_q, 0.0);
    std::vector<double> p_at_k(n_q * k_list.size(), 0.0);
    std::vector<double> pr_prec(n_q * cutoffs.size(), 0.0);
    std::vector<double> pr_rec(n_q * cutoffs.size(), 0.0);

    auto run_query = [&](std::size_t q) {
        Tensor query({index.dim});
        std::copy(&queries.data[q * index.dim], &queries.data[(q + 1) * index.dim],
                  query.data.begin());
        const auto hits = adc_search(index, query, n_g);
        std::vector<bool> rel(n_g);
        std::size_t total_relevant = 0;
        for (std::size_t i = 0; i < n_g; ++i) {
            rel[i] = oracle.relevant(q, hits[i].id);
            total_relevant += rel[i] ? 1 : 0;
        }

        ap[q] = average_precision(rel, r, total_relevant, denom);
        std::vector<std::size_t> cum(n_g + 1, 0);
        for (std::size_t i = 0; i < n_g; ++i) cum[i + 1] = cum[i] + (rel[i] ? 1 : 0);
        for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
            const std::size_t k = std::min(k_list[ki], n_g);
            p_at_k[q * k_list.size() + ki] =
                static_cast<double>(cum[k]) / static_cast<double>(k);
        }
        for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
            const std::size_t c = cutoffs[ci];
            pr_prec[q * cutoffs.size() + ci] =
                static_cast<double>(cum[c]) / static_cast<double>(c);
            pr_rec[q * cutoffs.size() + ci] =
                total_relevant == 0 ? 0.0
                                    : static_cast<double>(cum[c]) /
                                          static_cast<double>(total_relevant);
        }
    };

    if (threads <= 1 || n_q < 2) {
        for (std::size_t q = 0; q < n_q; ++q) run_query(q);
    } else {
        const std::size_t workers = std::min(threads, n_q);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t q = w; q < n_q; q += workers) run_query(q);
            });
        }
        for (auto& t : pool) t.join();
    }

    MetricReport report;
    report.r = r;
    double map_sum = 0.0;
    for (std::size_t q = 0; q < n_q; ++q) map_sum += ap[q];
    report.map_at_r = map_sum / static_cast<double>(n_q);
    for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
        double s = 0.0;
        for (std::size_t q = 0; q < n_q; ++q) s += p_at_k[q * k_list.size() + ki];
        report.precision_at_k.emplace_back(k_list[ki], s / static_cast<double>(n_q));
    }
    for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
        double ps = 0.0, rs = 0.0;
        for (std::size_t q = 0; q < n_q; ++q) {
            ps += pr_prec[q * cutoffs.size() + ci];
            rs += pr_rec[q * cutoffs.size() + ci];
        }
        report.pr_curve.push_back(PrPoint{cutoffs[ci], rs / static_cast<double>(n_q),
                                          ps / static_cast<double>(n_q)});
    }
    return report;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "mAP@" << r << ": " << map_at_r << "\n";
    for (const auto& [k, p] : precision_at_k) os << "P@" << k << ": " << p << "\n";
    os << "PR curve (" << pr_curve.size() << " cutoffs)\n";
    for (const auto& pt : pr_curve) {
        os << "  cutoff " << pt.cutoff << "  recall " << pt.recall << "  precision "
           << pt.precision << "\n";
    }
    return os.str();
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "metric,k_or_r,value\n";
    os << "map," << r << "," << map_at_r << "\n";
    for (const auto& [k, p] : precision_at_k) os << "precision," << k << "," << p << "\n";
    return os.str();
}

std::string MetricReport::pr_curve_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "cutoff,recall,precision\n";
    for (const auto& pt : pr_curve) {
        os << pt.cutoff << "," << pt.recall << "," << pt.precision << "\n";
    }
    return os.str();
}

CodebookSet kmeans_pq_baseline(const Tensor& gallery, std::size_t m, std::size_t k,
                               std::size_t iters, std::uint64_t seed,
                               std::vector<double>* objective_trace) {
    if (gallery.rank() != 2 || gallery.shape[1] % m != 0) {
        throw std::invalid_argument("kmeans_pq_baseline: bad gallery shape");
    }
    const std::size_t n = gallery.shape[0];
    if (n < k) throw std::invalid_argument("kmeans_pq_baseline: need N >= K");
    const std::size_t s = gallery.shape[1] / m;

    CodebookSet cb(m, k, s);
    if (objective_trace) objective_trace->assign(iters, 0.0);

    for (std::size_t book = 0; book < m; ++book) {
        Rng rng(seed, book);
        auto sub = [&](std::size_t item) {
            return std::span<const double>(&gallery.data[item * m * s + book * s], s);
        };

        // k-means++ seeding
        std::vector<std::size_t> centers;
        centers.push_back(static_cast<std::size_t>(rng.uniform_index(n)));
        std::vector<double> d2(n, std::numeric_limits<double>::infinity());
        while (centers.size() < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                d2[i] = std::min(d2[i], squared_euclidean(sub(i), sub(centers.back())));
                total += d2[i];
            }
            std::size_t pick = 0;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= target) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<std::size_t>(rng.uniform_index(n));
            }
            centers.push_back(pick);
        }
        std::vector<double> centroids(k * s);
        for (std::size_t c = 0; c < k; ++c) {
            const auto v = sub(centers[c]);
            std::copy(v.begin(), v.end(), centroids.begin() + static_cast<long>(c * s));
        }

        std::vector<std::size_t> assign(n);
        std::vector<double> assign_dist(n);
        for (std::size_t it = 0; it < iters; ++it) {
            // assignment
            double objective = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                std::size_t best_c = 0;
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = squared_euclidean(
                        sub(i), std::span<const double>(&centroids[c * s], s));
                    if (d < best) {
                        best = d;
                        best_c = c;
                    }
                }
                assign[i] = best_c;
                assign_dist[i] = best;
                objective += best;
            }
            if (objective_trace) (*objective_trace)[it] += objective;

            // update; empty clusters grab the farthest point
            std::vector<double> sums(k * s, 0.0);
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                ++counts[assign[i]];
                const auto v = sub(i);
                for (std::size_t d = 0; d < s; ++d) sums[assign[i] * s + d] += v[d];
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (counts[c] == 0) {
                    std::size_t far = 0;
                    double far_d = -1.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        if (assign_dist[i] > far_d) {
                            far_d = assign_dist[i];
                            far = i;
                        }
                    }
                    const auto v = sub(far);
                    std::copy(v.begin(), v.end(), centroids.begin() + static_cast<long>(c * s));
                    assign_dist[far] = 0.0;
                } else {
                    for (std::size_t d = 0; d < s; ++d) {
                        centroids[c * s + d] = sums[c * s + d] / static_cast<double>(counts[c]);
                    }
                }
            }
        }
        std::copy(centroids.begin(), centroids.end(),
                  cb.codewords.data.begin() + static_cast<long>(book * k * s));
    }
    return cb;
}

}  // namespace spq
