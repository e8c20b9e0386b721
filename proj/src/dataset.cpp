#include "spq/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "spq/ops.hpp"

namespace spq {

namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarSide = 32;

[[noreturn]] void format_fail(const std::string& msg) {
    throw std::runtime_error("cifar10: " + msg);
}

}  // namespace

Dataset ingest_cifar10_binary(const std::string& path) {
    return ingest_cifar10_binary(std::vector<std::string>{path});
}

Dataset ingest_cifar10_binary(const std::vector<std::string>& paths) {
    std::vector<std::uint8_t> raw;
    for (const auto& path : paths) {
        std::ifstream is(path, std::ios::binary | std::ios::ate);
        if (!is) format_fail("cannot open " + path);
        const auto size = static_cast<std::size_t>(is.tellg());
        if (size == 0 || size % kCifarRecord != 0) {
            format_fail(path + ": size is not a multiple of 3073");
        }
        is.seekg(0);
        const std::size_t off = raw.size();
        raw.resize(off + size);
        is.read(reinterpret_cast<char*>(raw.data() + off), static_cast<std::streamsize>(size));
        if (static_cast<std::size_t>(is.gcount()) != size) format_fail(path + ": short read");
    }
    const std::size_t n = raw.size() / kCifarRecord;

    Dataset ds;
    ds.kind = DatasetKind::cifar10_binary;
    ds.images = Tensor({n, kCifarSide, kCifarSide, 3});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = &raw[i * kCifarRecord];
        if (rec[0] > 9) format_fail("label byte out of range");
        ds.labels[i] = rec[0];
        // channel-major R,G,B planes, each 32x32 row-major
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < kCifarSide; ++y) {
                for (std::size_t x = 0; x < kCifarSide; ++x) {
                    const std::uint8_t b = rec[1 + c * 1024 + y * kCifarSide + x];
                    ds.images.data[((i * kCifarSide + y) * kCifarSide + x) * 3 + c] =
                        static_cast<double>(b) / 255.0;
                }
            }
        }
    }
    return ds;
}

Dataset gen_synthetic(std::size_t clusters, std::size_t dim, std::size_t per_cluster,
                      double noise_sigma, std::uint64_t seed) {
    if (clusters < 2) throw std::invalid_argument("gen_synthetic: need >= 2 clusters");
    if (noise_sigma <= 0.0) throw std::invalid_argument("gen_synthetic: sigma must be > 0");

    Rng rng(seed, 0);
    const double min_dist = 4.0 * noise_sigma;

    // Cluster centers uniform in [-1,1]^D, pairwise distance >= 4 sigma.
    std::vector<std::vector<double>> centers;
    std::size_t attempts = 0;
    while (centers.size() < clusters) {
        if (++attempts > 10000) {
            throw std::invalid_argument("gen_synthetic: sigma too large for center separation");
        }
        std::vector<double> c(dim);
        for (double& v : c) v = rng.uniform(-1.0, 1.0);
        bool ok = true;
        for (const auto& prev : centers) {
            if (std::sqrt(squared_euclidean(std::span<const double>(c),
                                            std::span<const double>(prev))) < min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(c));
    }

    const std::size_t n = clusters * per_cluster;
    Dataset ds;
    ds.kind = DatasetKind::synthetic;
    ds.descriptors = Tensor({n, dim});
    ds.views_a = Tensor({n, dim});
    ds.views_b = Tensor({n, dim});
    ds.labels.resize(n);
    for (std::size_t cl = 0; cl < clusters; ++cl) {
        for (std::size_t i = 0; i < per_cluster; ++i) {
            const std::size_t row = cl * per_cluster + i;
            ds.labels[row] = cl;
            for (std::size_t d = 0; d < dim; ++d) {
                const double item = centers[cl][d] + rng.normal(0.0, noise_sigma);
                ds.descriptors.at2(row, d) = item;
                ds.views_a.at2(row, d) = item + rng.normal(0.0, noise_sigma);
                ds.views_b.at2(row, d) = item + rng.normal(0.0, noise_sigma);
            }
        }
    }
    return ds;
}

std::vector<std::uint64_t> load_labels_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("labels: cannot open " + path);
    std::vector<std::uint64_t> labels;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        labels.push_back(std::stoull(line));
    }
    if (labels.empty()) throw std::runtime_error("labels: empty file " + path);
    return labels;
}

void save_labels_csv(const std::string& path, const std::vector<std::uint64_t>& labels) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("labels: cannot open " + path + " for writing");
    for (std::uint64_t l : labels) os << l << "\n";
}

}  // namespace spq
