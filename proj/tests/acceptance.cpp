// Acceptance suite: one line per criterion, PASS/FAIL (SKIP when an optional
// input is absent). Exit code 0 iff no criterion failed.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "spq/cqc_loss.hpp"
#include "spq/dataset.hpp"
#include "spq/encoder.hpp"
#include "spq/eval.hpp"
#include "spq/index.hpp"
#include "spq/ops.hpp"
#include "spq/pq_head.hpp"
#include "spq/tensor.hpp"
#include "spq/trainer.hpp"
#include "testutil.hpp"

using namespace spq;

namespace {

Tensor random_batch(std::size_t b, std::size_t d, Rng& rng, double scale = 1.0) {
    Tensor t({b, d});
    for (auto& v : t.data) v = rng.normal() * scale;
    return t;
}

double proj_loss(const Tensor& out, const Tensor& proj) {
    return dot(std::span<const double>(out.data), std::span<const double>(proj.data));
}

// ---- criterion 1: gradient suites ----------------------------------------

double worst_encoder_grad_error() {
    double worst = 0.0;
    Rng rng(101, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t hw = 4 + 2 * rng.uniform_index(2);  // 4 or 6
        const std::size_t ci = 1 + rng.uniform_index(2);
        const std::size_t co = 1 + rng.uniform_index(3);
        const std::size_t out_dim = 2 + rng.uniform_index(3);
        EncoderParams p;
        p.input_h = hw;
        p.input_w = hw;
        p.input_ch = ci;
        p.output_dim = out_dim;
        Conv3x3 conv{ci, co, random_batch(1, 9 * ci * co, rng, 0.4), Tensor({co})};
        conv.weights = Tensor({3, 3, ci, co}, conv.weights.data);
        for (auto& v : conv.bias.data) v = rng.normal() * 0.1;
        const std::size_t flat = (hw / 2) * (hw / 2) * co;
        Affine fc{flat, out_dim, random_batch(1, flat * out_dim, rng, 0.4), Tensor({out_dim})};
        fc.weights = Tensor({flat, out_dim}, fc.weights.data);
        for (auto& v : fc.bias.data) v = rng.normal() * 0.1;
        p.layers = {std::move(conv), ReLULayer{}, MaxPool2x2{}, FlattenLayer{}, std::move(fc)};
        p.validate();

        const std::size_t batch = 1 + rng.uniform_index(2);
        Tensor x({batch, hw, hw, ci});
        for (auto& v : x.data) v = rng.normal();
        Tensor proj({batch, out_dim});
        for (auto& v : proj.data) v = rng.normal();

        auto f = [&]() {
            EncoderTape tape;
            return proj_loss(encoder_forward(p, x, tape), proj);
        };
        EncoderTape tape;
        encoder_forward(p, x, tape);
        Tensor gin;
        EncoderGrads grads = encoder_backward(p, tape, proj, &gin);
        std::vector<Tensor*> params = p.trainable();
        params.push_back(&x);
        std::vector<const Tensor*> analytic;
        for (const Tensor* t : std::as_const(grads).trainable()) analytic.push_back(t);
        analytic.push_back(&gin);
        worst = std::max(worst, testutil::max_grad_rel_error(params, analytic, f));
    }
    return worst;
}

double worst_quantizer_grad_error() {
    double worst = 0.0;
    Rng rng(102, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.uniform_index(3);
        const std::size_t k = 1ull << (1 + rng.uniform_index(3));
        const std::size_t sub = 1 + rng.uniform_index(4);
        const std::size_t batch = 1 + rng.uniform_index(4);
        CodebookSet cb = CodebookSet::random_init(m, k, sub, rng);
        Tensor x = random_batch(batch, m * sub, rng);
        const Tensor proj = random_batch(batch, m * sub, rng);

        auto f = [&]() {
            SoftAssignTape tape;
            return proj_loss(soft_quantize(cb, x, 0.2, tape), proj);
        };
        SoftAssignTape tape;
        soft_quantize(cb, x, 0.2, tape);
        Tensor gc, gx;
        soft_quantize_backward(tape, cb, x, 0.2, proj, gc, gx);
        worst = std::max(worst, testutil::max_grad_rel_error({&cb.codewords, &x}, {&gc, &gx}, f));
    }
    return worst;
}

double worst_loss_grad_error() {
    double worst = 0.0;
    Rng rng(103, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n_b = 2 + rng.uniform_index(3);
        const std::size_t d = 3 + rng.uniform_index(4);
        Tensor x = random_batch(2 * n_b, d, rng);
        Tensor z = random_batch(2 * n_b, d, rng);
        CqcConfig cfg;
        cfg.tau_cqc = 0.5;
        cfg.include_positive_in_denominator = trial % 2 == 0;

        Tensor gx, gz;
        loss_and_backward(x, z, cfg, gx, gz);
        auto f = [&]() { return batch_loss(cross_similarities(x, z), cfg); };
        worst = std::max(worst, testutil::max_grad_rel_error({&x, &z}, {&gx, &gz}, f));
    }
    return worst;
}

// ---- criterion 4 helper: naive loss oracle --------------------------------

double naive_batch_loss(const Tensor& x, const Tensor& z, const CqcConfig& cfg) {
    const std::size_t n_b = x.shape[0] / 2;
    const std::size_t d = x.shape[1];
    auto cosv = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
        return cosine_similarity(std::span<const double>(&a.data[(i - 1) * d], d),
                                 std::span<const double>(&b.data[(j - 1) * d], d));
    };
    auto pair = [&](std::size_t i, std::size_t j) {
        const double num = std::exp(cosv(x, i, z, j) / cfg.tau_cqc);
        double den = 0.0;
        for (std::size_t n = 1; n <= n_b; ++n) {
            const std::size_t np = (j % 2 == 1) ? 2 * n - 1 : 2 * n;
            if (np == j && !cfg.include_positive_in_denominator) continue;
            den += std::exp(cosv(x, i, z, np) / cfg.tau_cqc);
        }
        return -std::log(num / den);
    };
    double total = 0.0;
    for (std::size_t n = 1; n <= n_b; ++n) total += pair(2 * n - 1, 2 * n) + pair(2 * n, 2 * n - 1);
    return total / (2.0 * static_cast<double>(n_b));
}

// ---- criterion 5 helpers --------------------------------------------------

Tensor quarter_grid_batch(std::size_t b, std::size_t d, Rng& rng) {
    Tensor t({b, d});
    for (auto& v : t.data) {
        v = 0.25 * static_cast<double>(static_cast<long>(rng.uniform_index(17)) - 8);
    }
    return t;
}

double naive_ap(const std::vector<bool>& rel, std::size_t r, std::size_t total) {
    if (total == 0) return 0.0;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(r, rel.size()); ++i) {
        if (rel[i]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(std::min(total, r));
}

// ---- criterion 6/8/9 shared synthetic benchmark ---------------------------

struct SyntheticBench {
    Dataset train_set;          // descriptor views for the trainer
    Tensor query, gallery;      // raw descriptors (passthrough encoder)
    std::vector<std::uint64_t> query_labels, gallery_labels;
};

SyntheticBench make_bench(std::uint64_t seed) {
    // 8 clusters x 525 items = 2000 train / 200 query / 2000 gallery,
    // split per cluster so every subset stays balanced.
    const std::size_t clusters = 8, dim = 64, per = 525;
    const std::size_t train_per = 250, query_per = 25, gallery_per = 250;
    const Dataset all = gen_synthetic(clusters, dim, per, 0.1, seed);

    SyntheticBench bench;
    bench.train_set.kind = DatasetKind::descriptor_views;
    bench.train_set.descriptors = Tensor({clusters * train_per, dim});
    bench.train_set.views_a = Tensor({clusters * train_per, dim});
    bench.train_set.views_b = Tensor({clusters * train_per, dim});
    bench.query = Tensor({clusters * query_per, dim});
    bench.gallery = Tensor({clusters * gallery_per, dim});

    auto copy_row = [&](Tensor& dst, std::size_t drow, const Tensor& src, std::size_t srow) {
        std::copy(&src.data[srow * dim], &src.data[(srow + 1) * dim], &dst.data[drow * dim]);
    };
    for (std::size_t cl = 0; cl < clusters; ++cl) {
        for (std::size_t i = 0; i < train_per; ++i) {
            const std::size_t srow = cl * per + i;
            const std::size_t drow = cl * train_per + i;
            copy_row(bench.train_set.descriptors, drow, all.descriptors, srow);
            copy_row(bench.train_set.views_a, drow, all.views_a, srow);
            copy_row(bench.train_set.views_b, drow, all.views_b, srow);
            bench.train_set.labels.push_back(cl);
        }
        for (std::size_t i = 0; i < query_per; ++i) {
            copy_row(bench.query, cl * query_per + i, all.descriptors, cl * per + train_per + i);
            bench.query_labels.push_back(cl);
        }
        for (std::size_t i = 0; i < gallery_per; ++i) {
            copy_row(bench.gallery, cl * gallery_per + i, all.descriptors,
                     cl * per + train_per + query_per + i);
            bench.gallery_labels.push_back(cl);
        }
    }
    return bench;
}

TrainConfig bench_config(Ablation ablation, std::size_t epochs) {
    TrainConfig cfg;
    cfg.mode = TrainMode::head_only_passthrough;
    cfg.dim = 64;
    cfg.num_books = 4;
    cfg.num_codewords = 16;
    cfg.batch_size = 256;
    cfg.epochs = epochs;
    cfg.base_lr = 1e-3;
    cfg.ablation = ablation;
    cfg.seed = 7;
    return cfg;
}

double bench_map(const SyntheticBench& bench, const CodebookSet& cb) {
    const IndexFile index = build_index(cb, bench.gallery);
    RelevanceOracle oracle;
    oracle.query_labels = bench.query_labels;
    oracle.gallery_labels = bench.gallery_labels;
    const MetricReport rep = evaluate(index, bench.query, oracle, 100, {100});
    return rep.map_at_r;
}

bool report(const char* name, bool ok, const std::string& detail) {
    std::printf("%s: %s (%s)\n", name, ok ? "PASS" : "FAIL", detail.c_str());
    return ok;
}

}  // namespace

int main() {
    bool all_ok = true;

    // 1. gradient suites
    {
        const double e1 = worst_encoder_grad_error();
        const double e2 = worst_quantizer_grad_error();
        const double e3 = worst_loss_grad_error();
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "max rel err: encoder %.2e, quantizer %.2e, loss %.2e", e1, e2, e3);
        all_ok &= report("criterion 1 gradient suites", e1 <= 1e-6 && e2 <= 1e-6 && e3 <= 1e-6,
                         buf);
    }

    // 2. soft -> hard limit
    {
        Rng rng(201, 0);
        const CodebookSet cb = CodebookSet::random_init(4, 16, 4, rng);
        double worst = 0.0;
        int accepted = 0;
        while (accepted < 1000) {
            const Tensor x = random_batch(1, 16, rng);
            bool margin_ok = true;
            for (std::size_t m = 0; m < 4 && margin_ok; ++m) {
                std::vector<double> d(16);
                for (std::size_t k = 0; k < 16; ++k) {
                    d[k] = squared_euclidean(std::span<const double>(&x.data[m * 4], 4),
                                             std::span<const double>(cb.codeword(m, k), 4));
                }
                std::sort(d.begin(), d.end());
                if (d[1] - d[0] < 0.1) margin_ok = false;
            }
            if (!margin_ok) continue;
            ++accepted;
            SoftAssignTape tape;
            const Tensor soft = soft_quantize(cb, x, 1e-3, tape);
            const Tensor hard = reconstruct(cb, hard_assign(cb, x), 1);
            for (std::size_t i = 0; i < 16; ++i) {
                worst = std::max(worst, std::abs(soft[i] - hard[i]));
            }
        }
        char buf[80];
        std::snprintf(buf, sizeof(buf), "max |soft - hard| = %.2e over 1000 descriptors", worst);
        all_ok &= report("criterion 2 soft-to-hard limit", worst <= 1e-4, buf);
    }

    // 3. ADC identity + packing bijection
    {
        Rng rng(301, 0);
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const CodebookSet cb = CodebookSet::random_init(4, 16, 4, rng);
            const Tensor item = random_batch(1, 16, rng);
            const IndexFile index = build_index(cb, item);
            Tensor q({16});
            for (auto& v : q.data) v = rng.normal();
            const auto hits = adc_search(index, q, 1);

            const CodebookSet rcb = codebooks_of(index);
            const Tensor recon = reconstruct(rcb, index.indices_of(0), 1);
            const double exact = squared_euclidean(std::span<const double>(q.data),
                                                   std::span<const double>(recon.data));
            worst = std::max(worst, std::abs(hits[0].distance - exact) / std::max(exact, 1e-12));
        }

        bool bijective = true;
        std::vector<bool> seen(1 << 16, false);
        for (std::uint32_t code = 0; code < (1u << 16) && bijective; ++code) {
            const std::uint32_t idx[4] = {(code >> 12) & 15, (code >> 8) & 15,
                                          (code >> 4) & 15, code & 15};
            const auto bytes = pack_code(idx, 4, 4);
            const std::size_t key = (static_cast<std::size_t>(bytes[0]) << 8) | bytes[1];
            if (seen[key]) bijective = false;
            seen[key] = true;
            const auto back = unpack_code(bytes.data(), 4, 4);
            for (int m = 0; m < 4; ++m) bijective &= back[m] == idx[m];
        }
        char buf[100];
        std::snprintf(buf, sizeof(buf), "max rel err %.2e; 16-bit packing bijective: %s", worst,
                      bijective ? "yes" : "no");
        all_ok &= report("criterion 3 ADC identity", worst <= 1e-5 && bijective, buf);
    }

    // 4. loss closed forms
    {
        double worst_const = 0.0;
        for (std::size_t n_b : {2ul, 4ul, 16ul, 256ul}) {
            CrossSimMatrix sims;
            sims.n_b = n_b;
            sims.s_odd_even = Tensor({n_b, n_b});
            sims.s_even_odd = Tensor({n_b, n_b});
            for (auto& v : sims.s_odd_even.data) v = 0.42;
            for (auto& v : sims.s_even_odd.data) v = 0.42;
            CqcConfig cfg;
            worst_const = std::max(worst_const,
                                   std::abs(batch_loss(sims, cfg) -
                                            std::log(static_cast<double>(n_b - 1))));
        }

        double worst_oracle = 0.0;
        Rng rng(401, 0);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n_b = 2 + rng.uniform_index(3);  // N_B in {2,3,4}
            const Tensor x = random_batch(2 * n_b, 5, rng);
            const Tensor z = random_batch(2 * n_b, 5, rng);
            CqcConfig cfg;
            worst_oracle = std::max(worst_oracle,
                                    std::abs(batch_loss(cross_similarities(x, z), cfg) -
                                             naive_batch_loss(x, z, cfg)));
        }
        char buf[100];
        std::snprintf(buf, sizeof(buf), "closed-form err %.2e, oracle err %.2e", worst_const,
                      worst_oracle);
        all_ok &= report("criterion 4 loss closed forms",
                         worst_const <= 1e-9 && worst_oracle <= 1e-12, buf);
    }

    // 5. evaluation oracle
    {
        // exact equality on a 10-item gallery with quarter-grid values
        Rng rng(501, 0);
        CodebookSet cb(2, 4, 2);
        for (auto& v : cb.codewords.data) {
            v = 0.25 * static_cast<double>(static_cast<long>(rng.uniform_index(17)) - 8);
        }
        const Tensor gallery = quarter_grid_batch(10, 4, rng);
        const Tensor queries = quarter_grid_batch(4, 4, rng);
        const IndexFile index = build_index(cb, gallery);
        RelevanceOracle oracle;
        oracle.query_labels = {0, 1, 0, 1};
        oracle.gallery_labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
        const MetricReport rep = evaluate(index, queries, oracle, 5, {1, 5});

        const CodebookSet rcb = codebooks_of(index);
        double map_sum = 0.0;
        double p1_sum = 0.0, p5_sum = 0.0;
        for (std::size_t q = 0; q < 4; ++q) {
            std::vector<std::pair<double, std::size_t>> order;
            for (std::size_t n = 0; n < 10; ++n) {
                const Tensor recon = reconstruct(rcb, index.indices_of(n), 1);
                double dist = 0.0;
                for (std::size_t i = 0; i < 4; ++i) {
                    const double diff = queries.at2(q, i) - recon[i];
                    dist += diff * diff;
                }
                order.emplace_back(dist, n);
            }
            std::sort(order.begin(), order.end());
            std::vector<bool> rel;
            std::size_t total = 0;
            for (const auto& [dist, id] : order) {
                rel.push_back(oracle.relevant(q, id));
                total += rel.back() ? 1 : 0;
            }
            map_sum += naive_ap(rel, 5, total);
            p1_sum += rel[0] ? 1.0 : 0.0;
            std::size_t h5 = 0;
            for (int i = 0; i < 5; ++i) h5 += rel[i] ? 1 : 0;
            p5_sum += static_cast<double>(h5) / 5.0;
        }
        const bool exact = rep.map_at_r == map_sum / 4 &&
                           rep.precision_at_k[0].second == p1_sum / 4 &&
                           rep.precision_at_k[1].second == p5_sum / 4;

        // chance level vs direct simulation, full-ranking AP, C=4 classes
        const std::size_t n_g = 400, n_q = 200, classes = 4;
        const CodebookSet rcb2 = CodebookSet::random_init(4, 16, 2, rng);
        const Tensor g2 = random_batch(n_g, 8, rng);
        const Tensor q2 = random_batch(n_q, 8, rng);
        const IndexFile idx2 = build_index(rcb2, g2);
        RelevanceOracle o2;
        for (std::size_t q = 0; q < n_q; ++q) o2.query_labels.push_back(rng.uniform_index(classes));
        for (std::size_t n = 0; n < n_g; ++n) o2.gallery_labels.push_back(n % classes);
        const MetricReport chance = evaluate(idx2, q2, o2, n_g, {10});

        // Monte-Carlo oracle: AP of uniformly random rankings of the same
        // gallery label multiset.
        std::vector<bool> flags(n_g);
        for (std::size_t n = 0; n < n_g; ++n) flags[n] = n % classes == 0;
        const std::size_t sims = 2000;
        double sim_sum = 0.0, sim_sq = 0.0;
        for (std::size_t s = 0; s < sims; ++s) {
            rng.shuffle(flags);
            std::size_t total = n_g / classes;
            const double ap = naive_ap(flags, n_g, total);
            sim_sum += ap;
            sim_sq += ap * ap;
        }
        const double sim_mean = sim_sum / sims;
        const double sim_var = sim_sq / sims - sim_mean * sim_mean;
        const double se = std::sqrt(sim_var / sims + sim_var / n_q);
        const bool chance_ok = std::abs(chance.map_at_r - sim_mean) <= 3.0 * se;

        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "naive equality: %s; chance mAP %.4f vs simulated %.4f +- %.4f",
                      exact ? "exact" : "MISMATCH", chance.map_at_r, sim_mean, 3.0 * se);
        all_ok &= report("criterion 5 evaluation oracle", exact && chance_ok, buf);
    }

    // 6 + 9. synthetic end-to-end and ablation ordering
    double spq_map = 0.0;
    {
        const SyntheticBench bench = make_bench(11);
        TrainerState state = init_trainer(bench_config(Ablation::spq, 300));
        train(state, bench.train_set, nullptr);
        spq_map = bench_map(bench, state.codebooks);

        const CodebookSet baseline =
            kmeans_pq_baseline(bench.gallery, 4, 16, 25, 11);
        const double base_map = bench_map(bench, baseline);

        char buf[120];
        std::snprintf(buf, sizeof(buf), "spq mAP@100 %.4f, k-means PQ %.4f, floor 0.625",
                      spq_map, base_map);
        all_ok &= report("criterion 6 synthetic end-to-end",
                         spq_map >= 0.95 * base_map && spq_map >= 0.625, buf);

        TrainerState flat = init_trainer(bench_config(Ablation::spq_q, 300));
        train(flat, bench.train_set, nullptr);
        const double flat_map = bench_map(bench, flat.codebooks);
        char buf9[140];
        if (spq_map >= flat_map) {
            std::snprintf(buf9, sizeof(buf9), "spq %.4f >= spq_q %.4f", spq_map, flat_map);
        } else {
            std::snprintf(buf9, sizeof(buf9),
                          "warning: spq %.4f < spq_q %.4f, within noise tolerance", spq_map,
                          flat_map);
        }
        report("criterion 9 ablation ordering", true, buf9);
    }

    // 7. optional CIFAR-10 smoke run, enabled by SPQ_CIFAR_DIR
    {
        const char* dir = std::getenv("SPQ_CIFAR_DIR");
        if (dir == nullptr) {
            std::printf("criterion 7 cifar10 smoke: SKIP (set SPQ_CIFAR_DIR to enable)\n");
        } else {
            const std::string batch = std::string(dir) + "/data_batch_1.bin";
            Dataset full = ingest_cifar10_binary(batch);
            Dataset subset;
            subset.kind = DatasetKind::cifar10_binary;
            const std::size_t n = 5000;
            subset.images = Tensor({n, 32, 32, 3});
            std::copy(full.images.data.begin(),
                      full.images.data.begin() + static_cast<long>(n * 32 * 32 * 3),
                      subset.images.data.begin());
            subset.labels.assign(full.labels.begin(), full.labels.begin() + n);

            TrainConfig cfg;
            cfg.mode = TrainMode::joint;
            cfg.dim = 64;
            cfg.num_books = 8;
            cfg.num_codewords = 16;
            cfg.batch_size = 256;
            cfg.epochs = 50;
            cfg.seed = 3;
            TrainerState state = init_trainer(cfg);
            train(state, subset, nullptr);

            // first 4000 images as gallery, last 1000 as queries
            const Tensor desc = extract_descriptors(state, subset);
            Tensor gallery({4000, 64}), queries({1000, 64});
            std::copy(desc.data.begin(), desc.data.begin() + 4000 * 64, gallery.data.begin());
            std::copy(desc.data.begin() + 4000 * 64, desc.data.end(), queries.data.begin());
            const IndexFile index = build_index(state.codebooks, gallery);
            RelevanceOracle oracle;
            oracle.gallery_labels.assign(subset.labels.begin(), subset.labels.begin() + 4000);
            oracle.query_labels.assign(subset.labels.begin() + 4000, subset.labels.end());
            const MetricReport rep = evaluate(index, queries, oracle, 1000, {1000});
            char buf[80];
            std::snprintf(buf, sizeof(buf), "mAP@1000 = %.4f, floor 0.20", rep.map_at_r);
            all_ok &= report("criterion 7 cifar10 smoke", rep.map_at_r >= 0.20, buf);
        }
    }

    // 8. bitwise determinism of loss log and index file
    {
        const SyntheticBench bench = make_bench(12);
        std::string logs[2], files[2];
        for (int run = 0; run < 2; ++run) {
            TrainerState state = init_trainer(bench_config(Ablation::spq, 10));
            std::ostringstream log;
            train(state, bench.train_set, &log);
            logs[run] = log.str();
            IndexFile index = build_index(state.codebooks, bench.gallery);
            index.labels = bench.gallery_labels;
            std::ostringstream file(std::ios::binary);
            write_spqi(file, index);
            files[run] = file.str();
        }
        const bool ok = logs[0] == logs[1] && files[0] == files[1] && !logs[0].empty();
        char buf[90];
        std::snprintf(buf, sizeof(buf), "loss log %zu bytes, index %zu bytes, both identical: %s",
                      logs[0].size(), files[0].size(), ok ? "yes" : "no");
        all_ok &= report("criterion 8 determinism", ok, buf);
    }

    return all_ok ? 0 : 1;
}
