#include "scrcl/cli.hpp"

#include "scrcl/error.hpp"
#include "scrcl/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <ostream>

namespace scrcl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Flag values are bound to local storage; only flags that were actually
/// given are copied onto the resolved config, so they win over a config file.
class Overrides {
  public:
    void add(CLI::Option* opt, std::function<void(RunConfig&)> set) { items_.emplace_back(opt, std::move(set)); }
    void apply(RunConfig& cfg) const {
        for (const auto& [opt, set] : items_) {
            if (opt->count() > 0) set(cfg);
        }
    }

  private:
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> items_;
};

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
    std::uint64_t v = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw UsageError(source + ": invalid seed '" + text + "'");
    return v;
}

std::optional<Index> parse_hvg(const std::string& text) {
    if (text == "all") return std::nullopt;
    Index v = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || v < 1) throw UsageError("--n-hvg: expected a positive count or 'all'");
    return v;
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
    const char* env = std::getenv("SCRCL_SEED");
    if (env == nullptr || *env == '\0') return fallback;
    return parse_seed(env, "SCRCL_SEED");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    SyntheticSpec spec;
    std::string layout = "none";
    std::string format = "csv";
    std::string out = ".";
};

void add_synth(CLI::App& app, SynthArgs& a) {
    CLI::App* s = app.add_subcommand("synth", "Write a synthetic labelled dataset");
    s->option_defaults()->always_capture_default();
    s->add_option("--cells", a.spec.n_cells, "Number of cells")->required();
    s->add_option("--genes", a.spec.n_genes, "Number of genes")->required();
    s->add_option("--types", a.spec.n_types, "Number of cell types")->required();
    s->add_option("--markers-per-type", a.spec.markers_per_type, "Planted marker genes per type");
    s->add_option("--lift", a.spec.marker_lift, "Mean lift of marker genes");
    s->add_option("--noise", a.spec.noise_sd, "Gaussian noise standard deviation");
    s->add_option("--dropout", a.spec.dropout_rate, "Dropout probability");
    s->add_option("--layout", a.layout, "Spatial layout (none writes no coordinates)")
        ->check(CLI::IsMember({"none", "bands"}));
    s->add_option("--format", a.format, "Expression file format")->check(CLI::IsMember({"csv", "mtx"}));
    s->add_option("--seed", a.spec.seed, "RNG seed (falls back to SCRCL_SEED)");
    s->add_option("--out", a.out, "Output directory");
}

int cmd_synth(const CLI::App& cmd, SynthArgs& a, std::ostream& out) {
    if (cmd.count("--seed") == 0) a.spec.seed = env_seed_or(a.spec.seed);
    a.spec.spatial_layout = a.layout == "bands" ? SpatialLayout::LayeredBands : SpatialLayout::None;
    validate(a.spec);
    const Dataset ds = generate_synthetic(a.spec);
    const fs::path dir = a.out;
    fs::create_directories(dir);

    const MatrixFormat format = parse_matrix_format(a.format);
    std::vector<fs::path> written;
    const fs::path expr = dir / (format == MatrixFormat::Csv ? "expression.csv" : "expression.mtx");
    write_expression(ds.expression, expr, format);
    written.push_back(expr);
    if (format == MatrixFormat::Mtx) {
        written.push_back(dir / "genes.tsv");
        written.push_back(dir / "barcodes.tsv");
    }
    written.push_back(dir / "labels.csv");
    write_labels(written.back(), ds.expression.cell_ids(), *ds.labels);

    written.push_back(dir / "planted_markers.tsv");
    {
        std::string text = "type\tgene\n";
        for (int t = 0; t < a.spec.n_types; ++t) {
            for (const auto& g : planted_markers(a.spec, t)) text += std::to_string(t) + '\t' + g + '\n';
        }
        write_text(written.back(), text);
    }
    if (ds.coords) {
        written.push_back(dir / "coords.csv");
        write_coords(written.back(), ds.expression.cell_ids(), *ds.coords);
    }
    for (const auto& p : written) out << file_sha256(p) << "  " << p.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- run

struct RunArgs {
    RunConfig v;
    std::string format = "csv";
    std::string graph = "expression";
    std::string metric = "cosine";
    std::string ablate = "none";
    std::string n_hvg = "2000";
    std::string config;
    std::string out;
    bool no_log1p = false;
    bool write_graphs = false;
    Overrides ov;
};

void add_run(CLI::App& app, RunArgs& a) {
    CLI::App* r = app.add_subcommand("run", "Train, cluster, evaluate and report markers");
    r->option_defaults()->always_capture_default();
    TrainConfig& t = a.v.train;
    auto opt = [&](const std::string& name, auto& slot, const std::string& desc, auto set) {
        CLI::Option* o = r->add_option(name, slot, desc);
        a.ov.add(o, [&slot, set](RunConfig& c) { set(c, slot); });
        return o;
    };
    opt("--data", a.v.data, "Expression matrix (cells x genes)", [](RunConfig& c, const std::string& s) { c.data = s; });
    opt("--format", a.format, "Expression file format", [](RunConfig& c, const std::string& s) {
        c.format = parse_matrix_format(s);
    })->check(CLI::IsMember({"csv", "mtx"}));
    opt("--coords", a.v.coords, "Cell coordinates CSV id,x,y", [](RunConfig& c, const std::string& s) { c.coords = s; });
    opt("--labels", a.v.labels, "Ground-truth labels CSV id,label", [](RunConfig& c, const std::string& s) {
        c.labels = s;
    });
    opt("--graph", a.graph, "Cell graph source", [](RunConfig& c, const std::string& s) {
        c.train.graph_mode = parse_graph_mode(s);
    })->check(CLI::IsMember({"spatial", "expression"}));
    opt("--metric", a.metric, "Similarity for expression cell graphs", [](RunConfig& c, const std::string& s) {
        c.train.metric = parse_cell_metric(s);
    })->check(CLI::IsMember({"cosine", "euclidean"}));
    opt("--k-cell", t.k_cell, "Neighbours per cell", [](RunConfig& c, Index k) { c.train.k_cell = k; });
    opt("--k-gene", t.k_gene, "Neighbours per gene", [](RunConfig& c, Index k) { c.train.k_gene = k; });
    opt("--dim", t.latent, "Cell embedding width", [](RunConfig& c, Index d) { c.train.latent = d; });
    opt("--hidden", t.hidden, "Encoder hidden width", [](RunConfig& c, Index h) { c.train.hidden = h; });
    opt("--gene-hidden", t.gene_hidden, "Gene encoder hidden width", [](RunConfig& c, Index h) {
        c.train.gene_hidden = h;
    });
    opt("--clusters", t.clusters, "Cluster count (0: number of label types)", [](RunConfig& c, Index k) {
        c.train.clusters = k;
    });
    opt("--alpha", t.alpha, "Weight of the neighbour contrast term", [](RunConfig& c, double x) { c.train.alpha = x; });
    opt("--beta", t.beta, "Weight of the cross-view reconstruction term", [](RunConfig& c, double x) {
        c.train.beta = x;
    });
    opt("--lr", t.lr, "Adam learning rate", [](RunConfig& c, double x) { c.train.lr = x; });
    opt("--epochs", t.epochs, "Training epochs", [](RunConfig& c, int e) { c.train.epochs = e; });
    opt("--seed", t.seed, "RNG seed (falls back to SCRCL_SEED)", [](RunConfig& c, std::uint64_t s) {
        c.train.seed = s;
    });
    opt("--restarts", a.v.restarts, "k-means restarts", [](RunConfig& c, int n) { c.restarts = n; });
    opt("--ablate", a.ablate, "Comma list of no_hea,no_ndc,no_cvc,mlp_only,gcn_only,no_refine",
        [](RunConfig& c, const std::string& s) { c.train.ablation = parse_ablation(s); });
    opt("--n-hvg", a.n_hvg, "Highly variable genes to keep, or 'all'", [](RunConfig& c, const std::string& s) {
        c.preprocess.n_hvg = parse_hvg(s);
    });
    opt("--target-sum", a.v.preprocess.target_sum, "Library size after normalization",
        [](RunConfig& c, double x) { c.preprocess.target_sum = x; });
    CLI::Option* nl = r->add_flag("--no-log1p", a.no_log1p, "Skip the log1p transform");
    a.ov.add(nl, [](RunConfig& c) { c.preprocess.log1p = false; });
    opt("--top-markers", a.v.top_markers, "Marker genes reported per cluster", [](RunConfig& c, std::size_t n) {
        c.top_markers = n;
    });
    r->add_option("--config", a.config, "JSON config or manifest; explicit flags win");
    r->add_flag("--write-graphs", a.write_graphs, "Also write cell and gene edge lists");
    r->add_option("--out", a.out, "Output directory")->required();
}

struct InputDigest {
    std::string key;
    fs::path path;
};

std::vector<InputDigest> input_files(const RunConfig& cfg) {
    std::vector<InputDigest> in{{"data", cfg.data}};
    if (cfg.format == MatrixFormat::Mtx) {
        const fs::path dir = fs::path(cfg.data).parent_path();
        in.push_back({"genes", dir / "genes.tsv"});
        in.push_back({"barcodes", dir / "barcodes.tsv"});
    }
    if (!cfg.coords.empty()) in.push_back({"coords", cfg.coords});
    if (!cfg.labels.empty()) in.push_back({"labels", cfg.labels});
    return in;
}

int cmd_run(RunArgs& a, std::ostream& out) {
    RunConfig cfg;
    cfg.train.seed = env_seed_or(cfg.train.seed);
    json config_json;
    if (!a.config.empty()) {
        config_json = read_json_file(a.config);
        apply_json(cfg, config_json);
    }
    a.ov.apply(cfg);
    if (cfg.data.empty()) throw UsageError("run: --data is required (flag or config)");
    if (cfg.train.graph_mode == GraphMode::Spatial && cfg.coords.empty()) {
        throw UsageError("run: --graph spatial requires --coords");
    }

    const Dataset ds = load_dataset(cfg);
    if (cfg.train.clusters == 0) {
        if (!ds.n_types) throw UsageError("run: --clusters is required when no labels are supplied");
        cfg.train.clusters = *ds.n_types;
    }

    ordered_json inputs = ordered_json::object();
    for (const auto& f : input_files(cfg)) {
        const std::string digest = file_sha256(f.path);
        if (config_json.contains("inputs") && config_json["inputs"].contains(f.key)) {
            const auto& recorded = config_json["inputs"][f.key];
            if (recorded.contains("sha256") && recorded["sha256"].get<std::string>() != digest) {
                throw StageError("ingest", "input '" + f.path.string() + "' differs from the manifest digest");
            }
        }
        inputs[f.key] = {{"path", f.path.string()}, {"sha256", digest}};
    }

    const fs::path dir = a.out;
    fs::create_directories(dir);
    ordered_json outputs = ordered_json::object();
    auto output = [&](const std::string& key, const std::string& name) {
        const fs::path p = dir / name;
        outputs[key] = p.string();
        return p;
    };
    const fs::path manifest_path = output("manifest", "manifest.json");
    const fs::path embeddings_path = output("embeddings", "embeddings.csv");
    const fs::path labels_path = output("labels", "labels.csv");
    const fs::path trace_path = output("loss_trace", "loss_trace.csv");
    const fs::path ckpt_path = output("checkpoint", "model.ckpt");
    const fs::path markers_path = output("markers", "markers.tsv");
    fs::path metrics_path;
    if (ds.labels) metrics_path = output("metrics", "metrics.json");
    fs::path cell_graph_path, gene_graph_path;
    if (a.write_graphs) {
        cell_graph_path = output("cell_graph", "cell_graph.tsv");
        gene_graph_path = output("gene_graph", "gene_graph.tsv");
    }

    const ordered_json resolved = to_json(cfg);
    ordered_json manifest;
    manifest["tool"] = "scrcl";
    manifest["version"] = kToolVersion;
    manifest["seed"] = cfg.train.seed;
    manifest["config"] = resolved;
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    write_text(manifest_path, manifest.dump(2) + "\n");

    const PipelineResult res = run_pipeline(ds, cfg);

    const auto& ids = ds.expression.cell_ids();
    export_embeddings(embeddings_path, ids, res.z, res.clusters.labels);
    write_labels(labels_path, ids, res.clusters.labels);
    write_loss_trace(trace_path, res.training.loss_trace);
    save_checkpoint(ckpt_path, res.training.final_params, resolved.dump());
    write_marker_report(markers_path, res.markers, cfg.top_markers);
    if (a.write_graphs) {
        write_edge_list(cell_graph_path, res.cell_graph);
        write_edge_list(gene_graph_path, res.gene_graph);
    }
    if (res.metrics) {
        write_text(metrics_path, metrics_json(*res.metrics) + "\n");
        out << metrics_table(*res.metrics);
    }
    const auto& last = res.training.loss_trace.back();
    out << "final loss " << last.total << " (hea " << last.hea << ", ndc " << last.ndc << ", cvc " << last.cvc
        << "), " << res.training.loss_trace.size() << " epochs\n";
    out << "outputs written to " << dir.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    CLI::App* e = app.add_subcommand("eval", "Score predicted labels against ground truth");
    e->option_defaults()->always_capture_default();
    e->add_option("--pred", a.pred, "Predicted labels CSV id,label")->required();
    e->add_option("--truth", a.truth, "Ground-truth labels CSV id,label")->required();
    e->add_option("--out", a.out, "Write metrics JSON here");
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const LabelTable pred = read_labels(a.pred);
    const LabelTable truth = read_labels(a.truth);
    const std::vector<int> aligned = align_labels(truth, pred.ids);
    const MetricsReport m = evaluate(pred.labels, aligned);
    out << metrics_table(m);
    if (!a.out.empty()) write_text(a.out, metrics_json(m) + "\n");
    return 0;
}

// ---------------------------------------------------------------- markers

struct MarkerArgs {
    std::string data;
    std::string format = "csv";
    std::string labels;
    std::string out;
    std::size_t top = 3;
    std::string n_hvg = "2000";
    double target_sum = 1e4;
    bool no_log1p = false;
    bool raw = false;
};

void add_markers(CLI::App& app, MarkerArgs& a) {
    CLI::App* m = app.add_subcommand("markers", "Rank marker genes for given cluster labels");
    m->option_defaults()->always_capture_default();
    m->add_option("--data", a.data, "Expression matrix (cells x genes)")->required();
    m->add_option("--format", a.format, "Expression file format")->check(CLI::IsMember({"csv", "mtx"}));
    m->add_option("--labels", a.labels, "Cluster labels CSV id,label")->required();
    m->add_option("--top", a.top, "Marker genes reported per cluster");
    m->add_option("--n-hvg", a.n_hvg, "Highly variable genes to keep, or 'all'");
    m->add_option("--target-sum", a.target_sum, "Library size after normalization");
    m->add_flag("--no-log1p", a.no_log1p, "Skip the log1p transform");
    m->add_flag("--raw", a.raw, "Score the matrix as given, without preprocessing");
    m->add_option("--out", a.out, "Marker report TSV")->required();
}

int cmd_markers(const MarkerArgs& a, std::ostream& out) {
    if (a.top < 1) throw UsageError("markers: --top must be >= 1");
    ExpressionMatrix x = load_expression(a.data, parse_matrix_format(a.format));
    const std::vector<int> labels = align_labels(read_labels(a.labels), x.cell_ids());
    if (!a.raw) x = preprocess(x, PreprocessConfig{a.target_sum, !a.no_log1p, parse_hvg(a.n_hvg)});
    const MarkerReport report = deg_scores(x, labels);
    write_marker_report(a.out, report, a.top);
    const auto top = top_markers(report, a.top);
    for (std::size_t c = 0; c < top.size(); ++c) {
        out << "cluster " << c << ':';
        for (const auto& g : top[c]) out << ' ' << g;
        out << '\n';
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"scrcl: contrastive clustering of single-cell and spatial expression data", "scrcl"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthArgs synth;
    RunArgs run;
    EvalArgs eval;
    MarkerArgs markers;
    add_synth(app, synth);
    add_run(app, run);
    add_eval(app, eval);
    add_markers(app, markers);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\nrun with --help for usage\n";
        return 2;
    }

    try {
        if (app.got_subcommand("synth")) return cmd_synth(*app.get_subcommand("synth"), synth, out);
        if (app.got_subcommand("run")) return cmd_run(run, out);
        if (app.got_subcommand("eval")) return cmd_eval(eval, out);
        if (app.got_subcommand("markers")) return cmd_markers(markers, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const StageError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace scrcl
