#include "scrcl/pipeline.hpp"

#include "scrcl/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

namespace scrcl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string format_name(MatrixFormat f) { return f == MatrixFormat::Csv ? "csv" : "mtx"; }
std::string graph_name(GraphMode g) { return g == GraphMode::Spatial ? "spatial" : "expression"; }
std::string metric_name(CellMetric m) { return m == CellMetric::Cosine ? "cosine" : "euclidean"; }

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace

ordered_json to_json(const RunConfig& cfg) {
    const TrainConfig& t = cfg.train;
    ordered_json j;
    j["data"] = cfg.data;
    j["format"] = format_name(cfg.format);
    j["coords"] = cfg.coords;
    j["labels"] = cfg.labels;
    j["target_sum"] = cfg.preprocess.target_sum;
    j["log1p"] = cfg.preprocess.log1p;
    j["n_hvg"] = cfg.preprocess.n_hvg ? json(*cfg.preprocess.n_hvg) : json("all");
    j["graph"] = graph_name(t.graph_mode);
    j["metric"] = metric_name(t.metric);
    j["k_cell"] = t.k_cell;
    j["k_gene"] = t.k_gene;
    j["dim"] = t.latent;
    j["hidden"] = t.hidden;
    j["gene_hidden"] = t.gene_hidden;
    j["clusters"] = t.clusters;
    j["alpha"] = t.alpha;
    j["beta"] = t.beta;
    j["lr"] = t.lr;
    j["epochs"] = t.epochs;
    j["seed"] = t.seed;
    j["restarts"] = cfg.restarts;
    j["ablate"] = to_string(t.ablation);
    j["top_markers"] = cfg.top_markers;
    return j;
}

void apply_json(RunConfig& cfg, const json& in) {
    const json& j = (in.is_object() && in.contains("config") && in["config"].is_object()) ? in["config"] : in;
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    TrainConfig& t = cfg.train;
    for (const auto& [key, v] : j.items()) {
        if (key == "data") cfg.data = v.get<std::string>();
        else if (key == "format") cfg.format = parse_matrix_format(v.get<std::string>());
        else if (key == "coords") cfg.coords = v.get<std::string>();
        else if (key == "labels") cfg.labels = v.get<std::string>();
        else if (key == "target_sum") cfg.preprocess.target_sum = v.get<double>();
        else if (key == "log1p") cfg.preprocess.log1p = v.get<bool>();
        else if (key == "n_hvg") {
            if (v.is_string() && v.get<std::string>() == "all") cfg.preprocess.n_hvg.reset();
            else cfg.preprocess.n_hvg = v.get<Index>();
        } else if (key == "graph") t.graph_mode = parse_graph_mode(v.get<std::string>());
        else if (key == "metric") t.metric = parse_cell_metric(v.get<std::string>());
        else if (key == "k_cell") t.k_cell = v.get<Index>();
        else if (key == "k_gene") t.k_gene = v.get<Index>();
        else if (key == "dim") t.latent = v.get<Index>();
        else if (key == "hidden") t.hidden = v.get<Index>();
        else if (key == "gene_hidden") t.gene_hidden = v.get<Index>();
        else if (key == "clusters") t.clusters = v.get<Index>();
        else if (key == "alpha") t.alpha = v.get<double>();
        else if (key == "beta") t.beta = v.get<double>();
        else if (key == "lr") t.lr = v.get<double>();
        else if (key == "epochs") t.epochs = v.get<int>();
        else if (key == "seed") t.seed = v.get<std::uint64_t>();
        else if (key == "restarts") cfg.restarts = v.get<int>();
        else if (key == "ablate") t.ablation = parse_ablation(v.get<std::string>());
        else if (key == "top_markers") cfg.top_markers = v.get<std::size_t>();
        else throw ConfigError("config: unknown key '" + key + "'");
    }
}

Dataset load_dataset(const RunConfig& cfg) {
    return stage("ingest", [&] {
        if (cfg.data.empty()) throw ParameterError("no expression file given");
        Dataset ds{load_expression(cfg.data, cfg.format), std::nullopt, std::nullopt, std::nullopt};
        if (!cfg.labels.empty()) {
            const LabelTable table = read_labels(cfg.labels);
            ds.labels = align_labels(table, ds.expression.cell_ids());
            ds.n_types = static_cast<int>(table.names.size());
        }
        if (!cfg.coords.empty()) ds.coords = read_coords(cfg.coords, ds.expression.cell_ids());
        return ds;
    });
}

PipelineResult run_pipeline(const Dataset& data, const RunConfig& cfg) {
    TrainConfig train_cfg = cfg.train;
    if (train_cfg.clusters == 0) {
        if (!data.n_types) throw StageError("config", "cluster count required when no labels are supplied");
        train_cfg.clusters = *data.n_types;
    }
    stage("config", [&] {
        validate(train_cfg);
        apply_ablation(train_cfg, 2, 2);
        if (cfg.restarts < 1) throw ConfigError("restarts must be >= 1");
        return 0;
    });

    PipelineResult r;
    r.processed = stage("preprocess", [&] { return preprocess(data.expression, cfg.preprocess); });
    r.cell_graph = stage("graphs", [&] {
        if (train_cfg.graph_mode == GraphMode::Spatial) {
            if (!data.coords) throw ParameterError("spatial graph mode needs coordinates");
            return build_cell_graph_spatial(*data.coords, train_cfg.k_cell);
        }
        return build_cell_graph_expression(r.processed, train_cfg.k_cell, train_cfg.metric);
    });
    r.gene_graph = stage("graphs", [&] { return build_gene_graph(r.processed, train_cfg.k_gene); });
    r.training = stage("train", [&] { return train(r.processed, r.cell_graph, r.gene_graph, train_cfg); });
    r.z = concat_embed(r.training.refined.z_m, r.training.refined.z_g);
    r.clusters = stage("cluster", [&] {
        KMeansOptions opts;
        opts.restarts = cfg.restarts;
        return kmeans(r.z, static_cast<int>(train_cfg.clusters), train_cfg.seed, opts);
    });
    if (data.labels) {
        r.metrics = stage("evaluate", [&] { return evaluate(r.clusters.labels, *data.labels); });
    }
    r.markers = stage("markers", [&] { return deg_scores(r.processed, r.clusters.labels); });
    return r;
}

std::string file_sha256(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": cannot open for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        const auto got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += kHex[md[i] >> 4];
        hex += kHex[md[i] & 0xF];
    }
    return hex;
}

}  // namespace scrcl
