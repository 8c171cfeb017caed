#pragma once

#include "scrcl/ingest.hpp"
#include "scrcl/matrix.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace scrcl {

/// Symmetric simple graph stored as sorted neighbor lists. Self-loops are
/// never stored; isolated nodes still exist.
class UndirectedGraph {
  public:
    UndirectedGraph() = default;
    explicit UndirectedGraph(Index n) : adj_(static_cast<std::size_t>(n)) {}

    /// Adds {i, j}; self-loops and repeats are ignored.
    void add_edge(Index i, Index j);
    bool has_edge(Index i, Index j) const;

    Index size() const { return static_cast<Index>(adj_.size()); }
    const std::vector<Index>& neighbors(Index i) const { return adj_[static_cast<std::size_t>(i)]; }
    Index degree(Index i) const { return static_cast<Index>(neighbors(i).size()); }
    std::size_t edge_count() const;
    /// Undirected edges with i < j in lexicographic order.
    std::vector<std::pair<Index, Index>> edges() const;

    /// Dense binary adjacency (zero diagonal).
    Matrix adjacency() const;

    friend bool operator==(const UndirectedGraph&, const UndirectedGraph&) = default;

  private:
    std::vector<std::vector<Index>> adj_;
};

/// Cell graph A over N cells; its neighbor lists are the N_i of the
/// neighborhood contrast.
using CellGraph = UndirectedGraph;
/// Gene graph G over M genes.
using GeneGraph = UndirectedGraph;

enum class CellMetric { Cosine, Euclidean };
enum class GraphMode { Spatial, Expression };

CellMetric parse_cell_metric(const std::string& name);
GraphMode parse_graph_mode(const std::string& name);

/// Union-symmetrized k-nearest-neighbor graph from a closeness score where
/// larger is closer; ties go to the lower index. Diagonal is ignored.
UndirectedGraph knn_from_scores(const Matrix& closeness, Index k);

/// Euclidean KNN on N x 2 coordinates.
CellGraph build_cell_graph_spatial(const Matrix& coords, Index k);

/// KNN over expression rows by cosine similarity or Euclidean distance.
/// All-zero rows have cosine similarity 0 to everything.
CellGraph build_cell_graph_expression(const ExpressionMatrix& x, Index k,
                                      CellMetric metric = CellMetric::Cosine);

/// KNN over genes (rows of X^T) by Pearson correlation. Constant genes have
/// correlation 0 to all others.
GeneGraph build_gene_graph(const ExpressionMatrix& x, Index k);
/// M x M Pearson correlation table used by build_gene_graph.
Matrix gene_correlation(const ExpressionMatrix& x);

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
Matrix normalize_adjacency(const UndirectedGraph& g);

/// Edge list TSV, one `i<TAB>j` line per undirected edge, 0-based.
void write_edge_list(const std::filesystem::path& path, const UndirectedGraph& g);
UndirectedGraph read_edge_list(const std::filesystem::path& path, Index n);

}  // namespace scrcl
