#pragma once

#include <string>
#include <vector>

#include "spq/dataset.hpp"
#include "spq/trainer.hpp"

namespace spq {

// Flat key=value run configuration. Unknown keys are rejected; echo()
// serializes every resolved value, defaults included, and parses back to
// an identical config.
struct RunConfig {
    TrainConfig train;

    std::string data_kind = "synthetic";  // cifar10-binary | raw-tensor-images |
                                          // descriptor-views | synthetic
    std::vector<std::string> data_paths;  // cifar batch files / image tensor
    std::string views_a_path;
    std::string views_b_path;
    std::string descriptors_path;
    std::string labels_path;

    std::size_t synth_clusters = 8;
    std::size_t synth_per_cluster = 250;
    double synth_sigma = 0.1;

    static RunConfig parse_text(const std::string& text);
    static RunConfig load(const std::string& path);
    std::string echo() const;

    Dataset load_dataset() const;
    void validate() const;
};

}  // namespace spq
