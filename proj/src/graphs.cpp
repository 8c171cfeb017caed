#include "scrcl/graphs.hpp"

#include "scrcl/error.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <numeric>

namespace scrcl {

void UndirectedGraph::add_edge(Index i, Index j) {
    if (i < 0 || j < 0 || i >= size() || j >= size()) {
        throw ParameterError("add_edge: (" + std::to_string(i) + "," + std::to_string(j) +
                             ") out of range for " + std::to_string(size()) + " nodes");
    }
    if (i == j) return;
    auto insert = [](std::vector<Index>& list, Index v) {
        auto it = std::lower_bound(list.begin(), list.end(), v);
        if (it == list.end() || *it != v) list.insert(it, v);
    };
    insert(adj_[static_cast<std::size_t>(i)], j);
    insert(adj_[static_cast<std::size_t>(j)], i);
}

bool UndirectedGraph::has_edge(Index i, Index j) const {
    const auto& list = neighbors(i);
    return std::binary_search(list.begin(), list.end(), j);
}

std::size_t UndirectedGraph::edge_count() const {
    std::size_t twice = 0;
    for (const auto& list : adj_) twice += list.size();
    return twice / 2;
}

std::vector<std::pair<Index, Index>> UndirectedGraph::edges() const {
    std::vector<std::pair<Index, Index>> out;
    for (Index i = 0; i < size(); ++i) {
        for (Index j : neighbors(i)) {
            if (i < j) out.emplace_back(i, j);
        }
    }
    return out;
}

Matrix UndirectedGraph::adjacency() const {
    Matrix a = Matrix::Zero(size(), size());
    for (Index i = 0; i < size(); ++i) {
        for (Index j : neighbors(i)) a(i, j) = 1.0;
    }
    return a;
}

CellMetric parse_cell_metric(const std::string& name) {
    if (name == "cosine") return CellMetric::Cosine;
    if (name == "euclidean") return CellMetric::Euclidean;
    throw ParameterError("unknown metric '" + name + "' (expected cosine or euclidean)");
}

GraphMode parse_graph_mode(const std::string& name) {
    if (name == "spatial") return GraphMode::Spatial;
    if (name == "expression") return GraphMode::Expression;
    throw ParameterError("unknown graph mode '" + name + "' (expected spatial or expression)");
}

UndirectedGraph knn_from_scores(const Matrix& closeness, Index k) {
    const Index n = closeness.rows();
    if (closeness.cols() != n) throw DimensionError("knn: score matrix must be square, got " + shape_string(closeness));
    if (k < 1 || k >= n) {
        throw ParameterError("knn: k = " + std::to_string(k) + " must satisfy 1 <= k < " + std::to_string(n));
    }
    UndirectedGraph g(n);
    std::vector<Index> order;
    for (Index i = 0; i < n; ++i) {
        order.clear();
        for (Index j = 0; j < n; ++j) {
            if (j != i) order.push_back(j);
        }
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
            const double sa = closeness(i, a), sb = closeness(i, b);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        for (Index r = 0; r < k; ++r) g.add_edge(i, order[static_cast<std::size_t>(r)]);
    }
    return g;
}

namespace {

Matrix neg_sq_distances(const Matrix& rows) {
    const Index n = rows.rows();
    Matrix out(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) out(i, j) = -(rows.row(i) - rows.row(j)).squaredNorm();
    }
    return out;
}

/// Gram matrix of unit-normalized rows; zero rows contribute 0 everywhere.
Matrix cosine_table(const Matrix& rows) {
    Matrix unit = rows;
    for (Index i = 0; i < unit.rows(); ++i) {
        const double norm = unit.row(i).norm();
        if (norm > 0.0) {
            unit.row(i) /= norm;
        } else {
            unit.row(i).setZero();
        }
    }
    return unit * unit.transpose();
}

}  // namespace

CellGraph build_cell_graph_spatial(const Matrix& coords, Index k) {
    if (coords.cols() != 2) throw DimensionError("spatial graph: coordinates must be N x 2, got " + shape_string(coords));
    if (k < 1 || k >= coords.rows()) {
        throw ParameterError("spatial graph: k = " + std::to_string(k) + " must satisfy 1 <= k < N = " +
                             std::to_string(coords.rows()));
    }
    return knn_from_scores(neg_sq_distances(coords), k);
}

CellGraph build_cell_graph_expression(const ExpressionMatrix& x, Index k, CellMetric metric) {
    if (k < 1 || k >= x.n_cells()) {
        throw ParameterError("expression graph: k = " + std::to_string(k) + " must satisfy 1 <= k < N = " +
                             std::to_string(x.n_cells()));
    }
    if (metric == CellMetric::Euclidean) return knn_from_scores(neg_sq_distances(x.values()), k);
    return knn_from_scores(cosine_table(x.values()), k);
}

GeneGraph build_gene_graph(const ExpressionMatrix& x, Index k) {
    if (k < 1 || k >= x.n_genes()) {
        throw ParameterError("gene graph: k = " + std::to_string(k) + " must satisfy 1 <= k < M = " +
                             std::to_string(x.n_genes()));
    }
    return knn_from_scores(gene_correlation(x), k);
}

Matrix gene_correlation(const ExpressionMatrix& x) {
    Matrix genes = x.values().transpose();
    // Centering each gene turns cosine into Pearson; constant genes become zero rows.
    const Vector means = genes.rowwise().mean();
    genes.colwise() -= means;
    for (Index g = 0; g < genes.rows(); ++g) {
        if ((genes.row(g).array().abs() <= 1e-12 * (1.0 + std::abs(means(g)))).all()) genes.row(g).setZero();
    }
    return cosine_table(genes);
}

Matrix normalize_adjacency(const UndirectedGraph& g) {
    const Index n = g.size();
    Matrix out = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const double di = static_cast<double>(g.degree(i) + 1);
        out(i, i) = 1.0 / di;
        for (Index j : g.neighbors(i)) out(i, j) = 1.0 / std::sqrt(di * static_cast<double>(g.degree(j) + 1));
    }
    return out;
}

void write_edge_list(const std::filesystem::path& path, const UndirectedGraph& g) {
    auto out = detail::open_out(path);
    for (const auto& [i, j] : g.edges()) out << i << '\t' << j << '\n';
}

UndirectedGraph read_edge_list(const std::filesystem::path& path, Index n) {
    auto in = detail::open_in(path);
    UndirectedGraph g(n);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto f = detail::split(line, '\t');
        if (f.size() != 2) throw ParseError(detail::where(path, lineno) + ": expected i<TAB>j");
        const auto i = detail::parse_int(f[0], path, lineno);
        const auto j = detail::parse_int(f[1], path, lineno);
        if (i < 0 || j < 0 || i >= n || j >= n) throw ParseError(detail::where(path, lineno) + ": node out of range");
        g.add_edge(i, j);
    }
    return g;
}

}  // namespace scrcl
