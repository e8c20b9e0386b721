#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spq/tensor.hpp"

namespace spq {

enum class DatasetKind { cifar10_binary, raw_tensor_images, descriptor_views, synthetic };

struct Dataset {
    DatasetKind kind = DatasetKind::synthetic;
    Tensor images;       // [N,H,W,3] for image kinds
    Tensor descriptors;  // [N,D] base items (descriptor kinds)
    Tensor views_a;      // [N,D] pre-paired views for passthrough training
    Tensor views_b;      // [N,D]
    std::vector<std::uint64_t> labels;

    bool has_images() const {
        return kind == DatasetKind::cifar10_binary || kind == DatasetKind::raw_tensor_images;
    }
    std::size_t size() const {
        return has_images() ? (images.numel() ? images.shape[0] : 0)
                            : (descriptors.numel() ? descriptors.shape[0] : 0);
    }
};

// One CIFAR-10 binary batch file: 10000 records of 3073 bytes
// (label byte + 3x32x32 channel-major pixels). Pixels scaled to [0,1].
Dataset ingest_cifar10_binary(const std::string& path);
Dataset ingest_cifar10_binary(const std::vector<std::string>& paths);

// Well-separated Gaussian clusters with paired descriptor views.
Dataset gen_synthetic(std::size_t clusters, std::size_t dim, std::size_t per_cluster,
                      double noise_sigma, std::uint64_t seed);

std::vector<std::uint64_t> load_labels_csv(const std::string& path);
void save_labels_csv(const std::string& path, const std::vector<std::uint64_t>& labels);

}  // namespace spq
