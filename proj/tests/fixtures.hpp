#pragma once

#include "oracles.hpp"
#include "scrcl/pipeline.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace scrcl::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("scrcl_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

/// Random probability vector with strictly positive entries.
inline std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) total += (v = u(rng));
    for (auto& v : p) v /= total;
    return p;
}

/// Undirected graph with each node linked to at least one random partner.
inline CellGraph random_graph(Index n, std::mt19937_64& rng, double density = 0.3) {
    CellGraph g(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            if (u(rng) < density) g.add_edge(i, j);
        }
        if (g.degree(i) == 0) {
            Index j = pick(rng);
            while (j == i) j = pick(rng);
            g.add_edge(i, j);
        }
    }
    return g;
}

inline oracle::Table to_table(const Matrix& m) {
    oracle::Table t(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    }
    return t;
}

inline oracle::Table adjacency_table(const UndirectedGraph& g) {
    oracle::Table t(static_cast<std::size_t>(g.size()), std::vector<double>(static_cast<std::size_t>(g.size()), 0.0));
    for (auto [i, j] : g.edges()) {
        t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1.0;
        t[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = 1.0;
    }
    return t;
}

/// Small full-model instance used by the gradient checks.
struct TinyProblem {
    ModelParams params;
    ModelInputs inputs;
    GraphMasks masks;
    CellGraph cell_graph;
    EffectiveSetup setup;
};

inline TinyProblem tiny_problem(std::uint64_t seed, Index n = 6, Index m = 8, Index c = 2,
                                const AblationSet& ablation = {}) {
    std::mt19937_64 rng(seed);
    TinyProblem p;
    Matrix x = random_matrix(n, m, rng, 0.0, 2.0);
    std::vector<std::string> cells, genes;
    for (Index i = 0; i < n; ++i) cells.push_back("c" + std::to_string(i));
    for (Index g = 0; g < m; ++g) genes.push_back("g" + std::to_string(g));
    ExpressionMatrix expr(x, cells, genes);
    p.cell_graph = build_cell_graph_expression(expr, 2, CellMetric::Cosine);
    GeneGraph gene_graph = build_gene_graph(expr, 2);
    p.inputs = make_inputs(expr, p.cell_graph, gene_graph);
    p.masks = make_masks(p.cell_graph);

    TrainConfig cfg;
    cfg.hidden = 7;
    cfg.latent = 5;
    cfg.gene_hidden = 4;
    cfg.clusters = c;
    cfg.ablation = ablation;
    p.setup = apply_ablation(cfg, n, m);
    p.params = init_params(p.setup.model, seed);
    // Larger refinement weights keep every term well away from zero curvature.
    if (p.params.config.refine) p.params.refinement.w = random_matrix(cfg.latent, m, rng, -0.5, 0.5);
    return p;
}

inline std::vector<Matrix> param_values(const ModelParams& params) {
    std::vector<Matrix> out;
    for (const auto& [name, m] : params.named()) out.push_back(*m);
    return out;
}

/// Total objective as a function of the leaves, for grad_check.
inline ad::ScalarFn total_fn(const TinyProblem& p) {
    return [&p](ad::Tape& tape, std::span<const ad::Var> leaves) {
        ParamVars pv = bind(p.params, leaves);
        return build_objective(tape, pv, p.params.config, p.inputs, p.masks, p.setup).total;
    };
}

}  // namespace scrcl::testing
