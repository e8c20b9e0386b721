#include "spq/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
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

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ",";
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string part;
    while (std::getline(is, part, ',')) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

}  // namespace

void RunConfig::validate() const {
    train.validate();
    if (data_kind != "cifar10-binary" && data_kind != "raw-tensor-images" &&
        data_kind != "descriptor-views" && data_kind != "synthetic") {
        throw std::invalid_argument("RunConfig: unknown data.kind " + data_kind);
    }
}

RunConfig RunConfig::parse_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("RunConfig: line " + std::to_string(lineno) +
                                        " is not key=value");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    RunConfig cfg;
    auto train_kv = cfg.train.to_kv();  // defaults
    std::map<std::string, std::string> rest;
    for (const auto& [k, v] : kv) {
        if (train_kv.count(k)) {
            train_kv[k] = v;
        } else {
            rest[k] = v;
        }
    }
    cfg.train = TrainConfig::from_kv(train_kv);

    auto take = [&](const std::string& key, auto&& apply) {
        auto it = rest.find(key);
        if (it != rest.end()) {
            apply(it->second);
            rest.erase(it);
        }
    };
    take("data.kind", [&](const std::string& v) { cfg.data_kind = v; });
    take("data.paths", [&](const std::string& v) { cfg.data_paths = split_csv(v); });
    take("data.views_a", [&](const std::string& v) { cfg.views_a_path = v; });
    take("data.views_b", [&](const std::string& v) { cfg.views_b_path = v; });
    take("data.descriptors", [&](const std::string& v) { cfg.descriptors_path = v; });
    take("data.labels", [&](const std::string& v) { cfg.labels_path = v; });
    take("synth.clusters", [&](const std::string& v) { cfg.synth_clusters = std::stoull(v); });
    take("synth.per_cluster",
         [&](const std::string& v) { cfg.synth_per_cluster = std::stoull(v); });
    take("synth.sigma", [&](const std::string& v) { cfg.synth_sigma = std::stod(v); });
    if (!rest.empty()) {
        throw std::invalid_argument("RunConfig: unknown key " + rest.begin()->first);
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("RunConfig: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_text(buf.str());
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : train.to_kv()) os << k << "=" << v << "\n";
    os << "data.kind=" << data_kind << "\n";
    os << "data.paths=" << join(data_paths) << "\n";
    os << "data.views_a=" << views_a_path << "\n";
    os << "data.views_b=" << views_b_path << "\n";
    os << "data.descriptors=" << descriptors_path << "\n";
    os << "data.labels=" << labels_path << "\n";
    os << "synth.clusters=" << synth_clusters << "\n";
    os << "synth.per_cluster=" << synth_per_cluster << "\n";
    os << "synth.sigma=" << fmt_double(synth_sigma) << "\n";
    return os.str();
}

Dataset RunConfig::load_dataset() const {
    validate();
    if (data_kind == "synthetic") {
        return gen_synthetic(synth_clusters, train.dim, synth_per_cluster, synth_sigma,
                             train.seed);
    }
    if (data_kind == "cifar10-binary") {
        if (data_paths.empty()) {
            throw std::invalid_argument("RunConfig: cifar10-binary needs data.paths");
        }
        return ingest_cifar10_binary(data_paths);
    }
    if (data_kind == "raw-tensor-images") {
        if (data_paths.size() != 1) {
            throw std::invalid_argument("RunConfig: raw-tensor-images needs one data.paths entry");
        }
        Dataset ds;
        ds.kind = DatasetKind::raw_tensor_images;
        ds.images = load_tensor(data_paths[0]);
        if (ds.images.rank() != 4 || ds.images.shape[3] != 3) {
            throw std::runtime_error("RunConfig: image tensor must be [N,H,W,3]");
        }
        if (!labels_path.empty()) ds.labels = load_labels_csv(labels_path);
        return ds;
    }
    // descriptor-views
    if (views_a_path.empty() || views_b_path.empty()) {
        throw std::invalid_argument("RunConfig: descriptor-views needs data.views_a/_b");
    }
    Dataset ds;
    ds.kind = DatasetKind::descriptor_views;
    ds.views_a = load_tensor(views_a_path);
    ds.views_b = load_tensor(views_b_path);
    if (ds.views_a.rank() != 2 || !ds.views_a.same_shape(ds.views_b)) {
        throw std::runtime_error("RunConfig: view tensors must be matching [N,D]");
    }
    if (!descriptors_path.empty()) {
        ds.descriptors = load_tensor(descriptors_path);
        if (ds.descriptors.rank() != 2 || ds.descriptors.shape[1] != ds.views_a.shape[1] ||
            ds.descriptors.shape[0] != ds.views_a.shape[0]) {
            throw std::runtime_error("RunConfig: descriptor tensor mismatch");
        }
    } else {
        ds.descriptors = ds.views_a;
    }
    if (!labels_path.empty()) ds.labels = load_labels_csv(labels_path);
    return ds;
}

}  // namespace spq
