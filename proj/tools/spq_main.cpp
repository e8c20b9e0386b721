#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "spq/dataset.hpp"
#include "spq/eval.hpp"
#include "spq/index.hpp"
#include "spq/run_config.hpp"
#include "spq/tensor_io.hpp"
#include "spq/trainer.hpp"

namespace fs = std::filesystem;
using namespace spq;

namespace {

std::size_t resolve_threads(std::size_t flag_value) {
    std::size_t threads = flag_value;
    if (threads == 0) {
        if (const char* env = std::getenv("SPQ_THREADS")) {
            threads = static_cast<std::size_t>(std::stoull(env));
        }
    }
    if (threads == 0) threads = std::thread::hardware_concurrency();
    return threads == 0 ? 1 : threads;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
}

Tensor load_descriptors(const std::string& path, const TrainerState* state) {
    Tensor t = load_tensor(path);
    if (t.rank() == 4) {
        if (!state) throw std::invalid_argument("image tensor input needs --checkpoint");
        return extract_descriptors(*state, t);
    }
    if (t.rank() != 2) throw std::runtime_error(path + ": expected [N,D] or [N,H,W,3]");
    if (state) return extract_descriptors(*state, t);
    return t;
}

int run(int argc, char** argv) {
    CLI::App app{"Self-supervised product quantization retrieval engine"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic clustered dataset");
    std::size_t sy_clusters = 8, sy_dim = 64, sy_per = 250;
    double sy_sigma = 0.1;
    std::uint64_t sy_seed = 0;
    std::string sy_out;
    synth->add_option("--clusters", sy_clusters);
    synth->add_option("--dim", sy_dim);
    synth->add_option("--per-cluster", sy_per);
    synth->add_option("--sigma", sy_sigma);
    synth->add_option("--seed", sy_seed);
    synth->add_option("--out", sy_out)->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Run the training loop");
    std::string tr_config, tr_out;
    std::int64_t tr_seed = -1;
    std::size_t tr_threads = 0;
    train_cmd->add_option("--config", tr_config)->required();
    train_cmd->add_option("--seed", tr_seed, "Override the config seed");
    train_cmd->add_option("--out", tr_out)->required();
    train_cmd->add_option("--threads", tr_threads);

    // encode
    auto* encode = app.add_subcommand("encode", "Build an index from a checkpoint and gallery");
    std::string en_ckpt, en_gallery, en_labels, en_out;
    encode->add_option("--checkpoint", en_ckpt)->required();
    encode->add_option("--gallery", en_gallery)->required();
    encode->add_option("--labels", en_labels);
    encode->add_option("--out", en_out)->required();

    // search
    auto* search = app.add_subcommand("search", "ADC search over an index");
    std::string se_index, se_queries, se_ckpt, se_out;
    std::size_t se_topk = 10;
    search->add_option("--index", se_index)->required();
    search->add_option("--queries", se_queries)->required();
    search->add_option("--checkpoint", se_ckpt, "Encode image queries with this checkpoint");
    search->add_option("--top-k", se_topk);
    search->add_option("--out", se_out)->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Retrieval metrics for an index");
    std::string ev_index, ev_queries, ev_qlabels, ev_glabels, ev_ckpt, ev_out;
    std::size_t ev_r = 100, ev_threads = 0;
    std::vector<std::size_t> ev_k{1000};
    bool ev_multi = false;
    eval_cmd->add_option("--index", ev_index)->required();
    eval_cmd->add_option("--queries", ev_queries)->required();
    eval_cmd->add_option("--query-labels", ev_qlabels)->required();
    eval_cmd->add_option("--gallery-labels", ev_glabels,
                         "Defaults to the label block in the index file");
    eval_cmd->add_option("--checkpoint", ev_ckpt);
    eval_cmd->add_option("--r", ev_r);
    eval_cmd->add_option("--k", ev_k);
    eval_cmd->add_flag("--multi-label", ev_multi);
    eval_cmd->add_option("--threads", ev_threads);
    eval_cmd->add_option("--out", ev_out)->required();

    // baseline-pq
    auto* baseline = app.add_subcommand("baseline-pq", "Classical k-means PQ index");
    std::string bl_gallery, bl_labels, bl_out;
    std::size_t bl_m = 8, bl_k = 16, bl_iters = 25;
    std::uint64_t bl_seed = 0;
    baseline->add_option("--gallery", bl_gallery)->required();
    baseline->add_option("--m", bl_m);
    baseline->add_option("--k", bl_k);
    baseline->add_option("--iters", bl_iters);
    baseline->add_option("--seed", bl_seed);
    baseline->add_option("--labels", bl_labels);
    baseline->add_option("--out", bl_out)->required();

    CLI11_PARSE(app, argc, argv);

    if (*synth) {
        const Dataset ds = gen_synthetic(sy_clusters, sy_dim, sy_per, sy_sigma, sy_seed);
        fs::create_directories(sy_out);
        save_tensor((fs::path(sy_out) / "items.spqt").string(), ds.descriptors);
        save_tensor((fs::path(sy_out) / "views_a.spqt").string(), ds.views_a);
        save_tensor((fs::path(sy_out) / "views_b.spqt").string(), ds.views_b);
        save_labels_csv((fs::path(sy_out) / "labels.csv").string(), ds.labels);
        std::ostringstream echo;
        echo << "synth.clusters=" << sy_clusters << "\nsynth.dim=" << sy_dim
             << "\nsynth.per_cluster=" << sy_per << "\nsynth.sigma=" << sy_sigma
             << "\nseed=" << sy_seed << "\n";
        write_text(fs::path(sy_out) / "config_echo.txt", echo.str());
        std::cout << "wrote synthetic dataset (" << ds.size() << " items) to " << sy_out << "\n";
    } else if (*train_cmd) {
        RunConfig cfg = RunConfig::load(tr_config);
        if (tr_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(tr_seed);
        (void)resolve_threads(tr_threads);  // the training loop is single-threaded
        fs::create_directories(tr_out);
        write_text(fs::path(tr_out) / "config_echo.txt", cfg.echo());
        const Dataset ds = cfg.load_dataset();
        TrainerState state = init_trainer(cfg.train);
        std::ofstream loss_log(fs::path(tr_out) / "loss_log.csv");
        loss_log << "epoch,step,lr,loss\n";
        const double final_loss = train(state, ds, &loss_log);
        save_checkpoint((fs::path(tr_out) / "checkpoint.spqm").string(), state);
        std::cout << "trained " << cfg.train.epochs << " epochs, final mean loss "
                  << final_loss << "\n";
    } else if (*encode) {
        const TrainerState state = load_checkpoint(en_ckpt);
        const Tensor gallery = load_descriptors(en_gallery, &state);
        IndexFile index = build_index(state.codebooks, gallery);
        if (!en_labels.empty()) index.labels = load_labels_csv(en_labels);
        save_index(en_out, index);
        std::cout << "indexed " << index.count << " items (" << state.codebooks.code_bits()
                  << "-bit codes) to " << en_out << "\n";
    } else if (*search) {
        const IndexFile index = load_index(se_index);
        TrainerState state;
        const bool have_ckpt = !se_ckpt.empty();
        if (have_ckpt) state = load_checkpoint(se_ckpt);
        const Tensor queries = load_descriptors(se_queries, have_ckpt ? &state : nullptr);
        std::ofstream os(se_out);
        if (!os) throw std::runtime_error("cannot open " + se_out + " for writing");
        os << "query_id,rank,item_id,distance\n";
        os.precision(8);
        for (std::size_t q = 0; q < queries.shape[0]; ++q) {
            Tensor query({index.dim});
            std::copy(&queries.data[q * index.dim], &queries.data[(q + 1) * index.dim],
                      query.data.begin());
            const auto hits = adc_search(index, query, std::min<std::size_t>(se_topk, index.count));
            for (std::size_t rank = 0; rank < hits.size(); ++rank) {
                os << q << "," << rank + 1 << "," << hits[rank].id << ","
                   << hits[rank].distance << "\n";
            }
        }
        std::cout << "wrote rankings for " << queries.shape[0] << " queries to " << se_out << "\n";
    } else if (*eval_cmd) {
        const IndexFile index = load_index(ev_index);
        TrainerState state;
        const bool have_ckpt = !ev_ckpt.empty();
        if (have_ckpt) state = load_checkpoint(ev_ckpt);
        const Tensor queries = load_descriptors(ev_queries, have_ckpt ? &state : nullptr);
        RelevanceOracle oracle;
        oracle.query_labels = load_labels_csv(ev_qlabels);
        oracle.gallery_labels = ev_glabels.empty() ? index.labels : load_labels_csv(ev_glabels);
        oracle.multi_label = ev_multi;
        if (oracle.gallery_labels.empty()) {
            throw std::invalid_argument("evaluate: no gallery labels in index; pass --gallery-labels");
        }
        const MetricReport report = evaluate(index, queries, oracle, ev_r, ev_k,
                                             ApDenominator::min_total_r,
                                             resolve_threads(ev_threads));
        fs::create_directories(ev_out);
        write_text(fs::path(ev_out) / "metrics.txt", report.to_text());
        write_text(fs::path(ev_out) / "metrics.csv", report.to_csv());
        write_text(fs::path(ev_out) / "pr_curve.csv", report.pr_curve_csv());
        std::cout << report.to_text();
    } else if (*baseline) {
        const Tensor gallery = load_descriptors(bl_gallery, nullptr);
        const CodebookSet cb = kmeans_pq_baseline(gallery, bl_m, bl_k, bl_iters, bl_seed);
        IndexFile index = build_index(cb, gallery);
        if (!bl_labels.empty()) index.labels = load_labels_csv(bl_labels);
        save_index(bl_out, index);
        std::cout << "k-means PQ baseline indexed " << index.count << " items to " << bl_out
                  << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::logic_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
