#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spq/augment.hpp"
#include "spq/cqc_loss.hpp"
#include "spq/dataset.hpp"
#include "spq/encoder.hpp"
#include "spq/pq_head.hpp"
#include "spq/tensor.hpp"

namespace spq {

enum class TrainMode { joint, head_only_passthrough };
enum class Ablation { spq, spq_c, spq_h, spq_q };

std::string to_string(TrainMode mode);
std::string to_string(Ablation ablation);
TrainMode train_mode_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t epochs = 1;
    double base_lr = 1e-3;
    double tau_q = 0.2;
    double tau_cqc = 0.5;
    std::size_t num_books = 8;      // M; spq_q forces 1
    std::size_t num_codewords = 16; // K
    std::size_t dim = 64;           // D
    TrainMode mode = TrainMode::joint;
    Ablation ablation = Ablation::spq;
    bool include_positive_in_denominator = false;
    std::uint64_t seed = 0;
    std::size_t input_h = 32;
    std::size_t input_w = 32;
    AugmentConfig aug;

    // M after applying ablation semantics.
    std::size_t effective_books() const { return ablation == Ablation::spq_q ? 1 : num_books; }

    void validate() const;
    std::map<std::string, std::string> to_kv() const;
    static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const std::vector<const Tensor*>& params);
};

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr);

// Half-cosine decay to zero, no restarts.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

struct TrainerState {
    TrainConfig cfg;
    EncoderParams encoder;  // empty layer list in passthrough mode
    CodebookSet codebooks;
    AdamState adam;
    std::size_t epoch = 0;
    std::vector<double> loss_history;  // per-epoch mean loss

    std::vector<Tensor*> trainable();
};

TrainerState init_trainer(const TrainConfig& cfg);

// One pass over the dataset (partial final batch dropped). Appends
// `epoch,step,lr,loss` lines to loss_log when given. Returns the
// epoch-mean loss.
double train_epoch(TrainerState& state, const Dataset& dataset, std::ostream* loss_log);

double train(TrainerState& state, const Dataset& dataset, std::ostream* loss_log);

// Descriptors for indexing/search: encoder forward in joint mode,
// passthrough otherwise.
Tensor extract_descriptors(const TrainerState& state, const Dataset& dataset);
Tensor extract_descriptors(const TrainerState& state, const Tensor& batch);

// Checkpoint file "SPQM".
void write_checkpoint(std::ostream& os, const TrainerState& state);
TrainerState read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const TrainerState& state);
TrainerState load_checkpoint(const std::string& path);

}  // namespace spq
