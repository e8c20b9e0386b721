#include "spq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "spq/tensor_io.hpp"

namespace spq {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) { return std::stod(s); }
std::size_t parse_size(const std::string& s) { return std::stoull(s); }

constexpr std::uint64_t kShuffleStream = 0x5348554600000000ULL;  // per-epoch shuffle
constexpr std::uint64_t kAugmentStream = 0x4155470000000000ULL;  // per-(epoch,view) draws

}  // namespace

std::string to_string(TrainMode mode) {
    return mode == TrainMode::joint ? "joint" : "head-only-passthrough";
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::spq: return "spq";
        case Ablation::spq_c: return "spq_c";
        case Ablation::spq_h: return "spq_h";
        default: return "spq_q";
    }
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "joint") return TrainMode::joint;
    if (s == "head-only-passthrough") return TrainMode::head_only_passthrough;
    throw std::invalid_argument("unknown train mode: " + s);
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "spq") return Ablation::spq;
    if (s == "spq_c") return Ablation::spq_c;
    if (s == "spq_h") return Ablation::spq_h;
    if (s == "spq_q") return Ablation::spq_q;
    throw std::invalid_argument("unknown ablation: " + s);
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (tau_q <= 0.0 || tau_cqc <= 0.0) {
        throw std::invalid_argument("TrainConfig: temperatures must be > 0");
    }
    const std::size_t m = effective_books();
    if (dim == 0 || dim % m != 0) {
        throw std::invalid_argument("TrainConfig: D must be a positive multiple of M");
    }
    if (num_codewords == 0 || (num_codewords & (num_codewords - 1)) != 0) {
        throw std::invalid_argument("TrainConfig: K must be a power of two");
    }
    aug.validate();
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    kv["batch_size"] = std::to_string(batch_size);
    kv["epochs"] = std::to_string(epochs);
    kv["base_lr"] = fmt_double(base_lr);
    kv["tau_q"] = fmt_double(tau_q);
    kv["tau_cqc"] = fmt_double(tau_cqc);
    kv["num_books"] = std::to_string(num_books);
    kv["num_codewords"] = std::to_string(num_codewords);
    kv["dim"] = std::to_string(dim);
    kv["mode"] = to_string(mode);
    kv["ablation"] = to_string(ablation);
    kv["include_positive"] = include_positive_in_denominator ? "1" : "0";
    kv["seed"] = std::to_string(seed);
    kv["input_h"] = std::to_string(input_h);
    kv["input_w"] = std::to_string(input_w);
    kv["aug.crop_scale_lo"] = fmt_double(aug.crop_scale_range[0]);
    kv["aug.crop_scale_hi"] = fmt_double(aug.crop_scale_range[1]);
    kv["aug.crop_aspect_lo"] = fmt_double(aug.crop_aspect_range[0]);
    kv["aug.crop_aspect_hi"] = fmt_double(aug.crop_aspect_range[1]);
    kv["aug.flip_prob"] = fmt_double(aug.flip_prob);
    kv["aug.jitter_strength"] = fmt_double(aug.jitter_strength);
    kv["aug.jitter_prob"] = fmt_double(aug.jitter_prob);
    kv["aug.grayscale_prob"] = fmt_double(aug.grayscale_prob);
    kv["aug.blur_prob"] = fmt_double(aug.blur_prob);
    kv["aug.blur_sigma_lo"] = fmt_double(aug.blur_sigma_range[0]);
    kv["aug.blur_sigma_hi"] = fmt_double(aug.blur_sigma_range[1]);
    kv["aug.output_h"] = std::to_string(aug.output_h);
    kv["aug.output_w"] = std::to_string(aug.output_w);
    return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
    TrainConfig cfg;
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument("TrainConfig: missing key " + key);
        return it->second;
    };
    cfg.batch_size = parse_size(get("batch_size"));
    cfg.epochs = parse_size(get("epochs"));
    cfg.base_lr = parse_double(get("base_lr"));
    cfg.tau_q = parse_double(get("tau_q"));
    cfg.tau_cqc = parse_double(get("tau_cqc"));
    cfg.num_books = parse_size(get("num_books"));
    cfg.num_codewords = parse_size(get("num_codewords"));
    cfg.dim = parse_size(get("dim"));
    cfg.mode = train_mode_from_string(get("mode"));
    cfg.ablation = ablation_from_string(get("ablation"));
    cfg.include_positive_in_denominator = get("include_positive") == "1";
    cfg.seed = std::stoull(get("seed"));
    cfg.input_h = parse_size(get("input_h"));
    cfg.input_w = parse_size(get("input_w"));
    cfg.aug.crop_scale_range = {parse_double(get("aug.crop_scale_lo")),
                                parse_double(get("aug.crop_scale_hi"))};
    cfg.aug.crop_aspect_range = {parse_double(get("aug.crop_aspect_lo")),
                                 parse_double(get("aug.crop_aspect_hi"))};
    cfg.aug.flip_prob = parse_double(get("aug.flip_prob"));
    cfg.aug.jitter_strength = parse_double(get("aug.jitter_strength"));
    cfg.aug.jitter_prob = parse_double(get("aug.jitter_prob"));
    cfg.aug.grayscale_prob = parse_double(get("aug.grayscale_prob"));
    cfg.aug.blur_prob = parse_double(get("aug.blur_prob"));
    cfg.aug.blur_sigma_range = {parse_double(get("aug.blur_sigma_lo")),
                                parse_double(get("aug.blur_sigma_hi"))};
    cfg.aug.output_h = parse_size(get("aug.output_h"));
    cfg.aug.output_w = parse_size(get("aug.output_w"));
    cfg.validate();
    return cfg;
}

AdamState AdamState::init(const std::vector<const Tensor*>& params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape);
        s.v.emplace_back(p->shape);
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        const Tensor& grad = *grads[p];
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        if (!param.same_shape(grad)) throw std::invalid_argument("adam_step: shape mismatch");
        for (std::size_t i = 0; i < param.numel(); ++i) {
            const double g = grad.data[i];
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            param.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
    if (total_steps == 0 || step > total_steps) {
        throw std::invalid_argument("cosine_lr: step out of range");
    }
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * frac));
}

std::vector<Tensor*> TrainerState::trainable() {
    std::vector<Tensor*> out = encoder.trainable();
    out.push_back(&codebooks.codewords);
    return out;
}

TrainerState init_trainer(const TrainConfig& cfg) {
    cfg.validate();
    TrainerState state;
    state.cfg = cfg;
    if (cfg.mode == TrainMode::joint) {
        Rng enc_rng(cfg.seed, 1);
        state.encoder = make_default_encoder(cfg.input_h, cfg.input_w, cfg.dim, enc_rng);
    } else {
        state.encoder.input_h = 1;
        state.encoder.input_w = 1;
        state.encoder.input_ch = cfg.dim;
        state.encoder.output_dim = cfg.dim;
    }
    Rng cb_rng(cfg.seed, 2);
    const std::size_t m = cfg.effective_books();
    state.codebooks = CodebookSet::random_init(m, cfg.num_codewords, cfg.dim / m, cb_rng);

    std::vector<const Tensor*> params;
    for (Tensor* t : state.trainable()) params.push_back(t);
    state.adam = AdamState::init(params);
    return state;
}

namespace {

// Straight-through backward for the SPQ-H ablation: descriptor grads are a
// copy of the quantized grads; codeword grads accumulate per assignment.
void hard_quantize_backward(const CodebookSet& cb, const std::vector<std::uint32_t>& indices,
                            const Tensor& grad_quantized, Tensor& grad_codewords,
                            Tensor& grad_descriptors) {
    grad_codewords = Tensor(cb.codewords.shape);
    grad_descriptors = grad_quantized;
    const std::size_t B = grad_quantized.shape[0];
    const std::size_t M = cb.num_books, S = cb.subdim;
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            const std::uint32_t k = indices[n * M + m];
            const double* g = &grad_quantized.data[n * M * S + m * S];
            double* gc = &grad_codewords.data[(m * cb.num_codewords + k) * S];
            for (std::size_t d = 0; d < S; ++d) gc[d] += g[d];
        }
    }
}

Tensor build_view_stack_passthrough(const Dataset& dataset,
                                    const std::vector<std::size_t>& items, std::size_t dim) {
    if (dataset.views_a.numel() == 0 || dataset.views_b.numel() == 0) {
        throw std::invalid_argument("train: passthrough mode needs paired descriptor views");
    }
    if (dataset.views_a.shape[1] != dim) {
        throw std::invalid_argument("train: view dim does not match config dim");
    }
    Tensor stack({2 * items.size(), dim});
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::size_t it = items[i];
        std::copy(&dataset.views_a.data[it * dim], &dataset.views_a.data[(it + 1) * dim],
                  &stack.data[(2 * i) * dim]);
        std::copy(&dataset.views_b.data[it * dim], &dataset.views_b.data[(it + 1) * dim],
                  &stack.data[(2 * i + 1) * dim]);
    }
    return stack;
}

Tensor build_image_stack(const Dataset& dataset, const std::vector<std::size_t>& items,
                         const TrainConfig& cfg, std::size_t epoch) {
    const std::size_t H = cfg.aug.output_h, W = cfg.aug.output_w;
    Tensor stack({2 * items.size(), H, W, 3});
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::size_t it = items[i];
        Image img(dataset.images.shape[1], dataset.images.shape[2]);
        std::copy(&dataset.images.data[it * img.pixels.size()],
                  &dataset.images.data[(it + 1) * img.pixels.size()], img.pixels.begin());
        for (int view = 0; view < 2; ++view) {
            Rng rng(cfg.seed, kAugmentStream ^ (epoch * 0x100000000ULL + 2 * it + view));
            const Image out = sample_view(img, cfg.aug, rng);
            std::copy(out.pixels.begin(), out.pixels.end(),
                      &stack.data[(2 * i + view) * H * W * 3]);
        }
    }
    return stack;
}

double max_abs(const Tensor& t) {
    double mx = 0.0;
    for (double v : t.data) mx = std::max(mx, std::abs(v));
    return mx;
}

}  // namespace

double train_epoch(TrainerState& state, const Dataset& dataset, std::ostream* loss_log) {
    const TrainConfig& cfg = state.cfg;
    cfg.validate();
    const std::size_t n = dataset.size();
    if (n < cfg.batch_size) {
        throw std::invalid_argument("train_epoch: dataset smaller than one batch");
    }
    const std::size_t steps_per_epoch = n / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(cfg.seed, kShuffleStream ^ state.epoch);
    shuffle_rng.shuffle(order);

    const CqcConfig loss_cfg{cfg.tau_cqc, cfg.include_positive_in_denominator};
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
        const std::vector<std::size_t> items(order.begin() + static_cast<long>(step * cfg.batch_size),
                                             order.begin() + static_cast<long>((step + 1) * cfg.batch_size));

        // Forward: views -> descriptors
        Tensor x_hat;
        EncoderTape tape;
        const bool joint = cfg.mode == TrainMode::joint;
        if (joint) {
            if (!dataset.has_images()) {
                throw std::invalid_argument("train_epoch: joint mode needs image data");
            }
            const Tensor batch = build_image_stack(dataset, items, cfg, state.epoch);
            x_hat = encoder_forward(state.encoder, batch, tape);
        } else {
            x_hat = build_view_stack_passthrough(dataset, items, cfg.dim);
        }

        // Quantize
        Tensor z_hat;
        SoftAssignTape qtape;
        std::vector<std::uint32_t> hard_indices;
        if (cfg.ablation == Ablation::spq_h) {
            hard_indices = hard_assign(state.codebooks, x_hat);
            z_hat = reconstruct(state.codebooks, hard_indices, x_hat.shape[0]);
        } else {
            z_hat = soft_quantize(state.codebooks, x_hat, cfg.tau_q, qtape);
        }

        // Loss and gradients w.r.t. the two stacks
        Tensor grad_x, grad_z;
        double loss;
        if (cfg.ablation == Ablation::spq_c) {
            Tensor g1, g2;
            loss = loss_and_backward(z_hat, z_hat, loss_cfg, g1, g2);
            grad_z = std::move(g1);
            for (std::size_t i = 0; i < grad_z.numel(); ++i) grad_z.data[i] += g2.data[i];
            grad_x = Tensor(x_hat.shape);
        } else {
            loss = loss_and_backward(x_hat, z_hat, loss_cfg, grad_x, grad_z);
        }

        // Back through the quantizer
        Tensor grad_codewords, grad_desc_from_z;
        if (cfg.ablation == Ablation::spq_h) {
            hard_quantize_backward(state.codebooks, hard_indices, grad_z, grad_codewords,
                                   grad_desc_from_z);
        } else {
            soft_quantize_backward(qtape, state.codebooks, x_hat, cfg.tau_q, grad_z,
                                   grad_codewords, grad_desc_from_z);
        }
        for (std::size_t i = 0; i < grad_x.numel(); ++i) {
            grad_x.data[i] += grad_desc_from_z.data[i];
        }

        // Back through the encoder
        std::vector<Tensor*> params = state.trainable();
        std::vector<const Tensor*> grads;
        EncoderGrads enc_grads;
        if (joint) {
            enc_grads = encoder_backward(state.encoder, tape, grad_x);
            for (const Tensor* t : std::as_const(enc_grads).trainable()) grads.push_back(t);
        }
        grads.push_back(&grad_codewords);

        if (!std::isfinite(loss)) {
            double gmax = 0.0;
            for (const Tensor* g : grads) gmax = std::max(gmax, max_abs(*g));
            std::ostringstream msg;
            msg << "train_epoch: non-finite loss at epoch " << state.epoch << " batch " << step
                << " (max |grad| = " << gmax << ")";
            throw std::runtime_error(msg.str());
        }

        const std::size_t global_step = state.epoch * steps_per_epoch + step;
        const double lr = cosine_lr(global_step, total_steps, cfg.base_lr);
        adam_step(params, grads, state.adam, lr);

        if (loss_log) {
            (*loss_log) << state.epoch << "," << global_step << "," << fmt_double(lr) << ","
                        << fmt_double(loss) << "\n";
        }
        loss_sum += loss;
    }
    ++state.epoch;
    const double mean_loss = loss_sum / static_cast<double>(steps_per_epoch);
    state.loss_history.push_back(mean_loss);
    return mean_loss;
}

double train(TrainerState& state, const Dataset& dataset, std::ostream* loss_log) {
    double mean = 0.0;
    for (std::size_t e = state.epoch; e < state.cfg.epochs; ++e) {
        mean = train_epoch(state, dataset, loss_log);
    }
    return mean;
}

Tensor extract_descriptors(const TrainerState& state, const Tensor& batch) {
    if (state.cfg.mode == TrainMode::joint) {
        // Chunked so the forward tape stays small.
        const std::size_t n = batch.shape[0];
        const std::size_t chunk = 128;
        const std::size_t item = batch.numel() / n;
        Tensor out({n, state.cfg.dim});
        for (std::size_t start = 0; start < n; start += chunk) {
            const std::size_t count = std::min(chunk, n - start);
            std::vector<std::size_t> shape = batch.shape;
            shape[0] = count;
            Tensor piece(shape, std::vector<double>(
                                    batch.data.begin() + static_cast<long>(start * item),
                                    batch.data.begin() + static_cast<long>((start + count) * item)));
            EncoderTape tape;
            const Tensor desc = encoder_forward(state.encoder, piece, tape);
            std::copy(desc.data.begin(), desc.data.end(),
                      out.data.begin() + static_cast<long>(start * state.cfg.dim));
        }
        return out;
    }
    return passthrough(batch, state.cfg.dim);
}

Tensor extract_descriptors(const TrainerState& state, const Dataset& dataset) {
    if (state.cfg.mode == TrainMode::joint) {
        if (!dataset.has_images()) {
            throw std::invalid_argument("extract_descriptors: joint mode needs images");
        }
        return extract_descriptors(state, dataset.images);
    }
    if (dataset.descriptors.numel() == 0) {
        throw std::invalid_argument("extract_descriptors: dataset has no descriptors");
    }
    return passthrough(dataset.descriptors, state.cfg.dim);
}

void write_checkpoint(std::ostream& os, const TrainerState& state) {
    os.write("SPQM", 4);
    put_u16le(os, 1);
    auto kv = state.cfg.to_kv();
    kv["epoch"] = std::to_string(state.epoch);
    kv["adam.step"] = std::to_string(state.adam.step);
    kv["adam.beta1"] = fmt_double(state.adam.beta1);
    kv["adam.beta2"] = fmt_double(state.adam.beta2);
    kv["adam.eps"] = fmt_double(state.adam.eps);
    kv["loss_history.count"] = std::to_string(state.loss_history.size());
    std::string block;
    for (const auto& [k, v] : kv) block += k + "=" + v + "\n";
    put_u32le(os, static_cast<std::uint32_t>(block.size()));
    os.write(block.data(), static_cast<std::streamsize>(block.size()));

    for (const Tensor* t : state.encoder.trainable()) write_spqt(os, *t, Dtype::f64);
    write_spqt(os, state.codebooks.codewords, Dtype::f64);
    for (const Tensor& t : state.adam.m) write_spqt(os, t, Dtype::f64);
    for (const Tensor& t : state.adam.v) write_spqt(os, t, Dtype::f64);
    if (!state.loss_history.empty()) {
        write_spqt(os, Tensor({state.loss_history.size()}, state.loss_history), Dtype::f64);
    }
}

TrainerState read_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "SPQM", 4) != 0) {
        throw std::runtime_error("SPQM: bad magic");
    }
    if (get_u16le(is) != 1) throw std::runtime_error("SPQM: unsupported version");
    const std::uint32_t block_len = get_u32le(is);
    std::string block(block_len, '\0');
    is.read(block.data(), block_len);
    if (static_cast<std::uint32_t>(is.gcount()) != block_len) {
        throw std::runtime_error("SPQM: truncated config block");
    }
    std::map<std::string, std::string> kv;
    std::istringstream bs(block);
    std::string line;
    while (std::getline(bs, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("SPQM: malformed config line");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    TrainerState state = init_trainer(TrainConfig::from_kv(kv));
    state.epoch = std::stoull(kv.at("epoch"));
    state.adam.step = std::stoull(kv.at("adam.step"));
    state.adam.beta1 = parse_double(kv.at("adam.beta1"));
    state.adam.beta2 = parse_double(kv.at("adam.beta2"));
    state.adam.eps = parse_double(kv.at("adam.eps"));

    for (Tensor* t : state.encoder.trainable()) *t = read_spqt(is);
    state.codebooks.codewords = read_spqt(is);
    for (Tensor& t : state.adam.m) t = read_spqt(is);
    for (Tensor& t : state.adam.v) t = read_spqt(is);
    const std::size_t hist = std::stoull(kv.at("loss_history.count"));
    if (hist > 0) {
        const Tensor h = read_spqt(is);
        if (h.numel() != hist) throw std::runtime_error("SPQM: loss history size mismatch");
        state.loss_history = h.data;
    }
    return state;
}

void save_checkpoint(const std::string& path, const TrainerState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("SPQM: cannot open " + path + " for writing");
    write_checkpoint(os, state);
    if (!os) throw std::runtime_error("SPQM: write failed: " + path);
}

TrainerState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("SPQM: cannot open " + path);
    return read_checkpoint(is);
}

}  // namespace spq
