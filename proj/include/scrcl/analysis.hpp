#pragma once

#include "scrcl/ingest.hpp"
#include "scrcl/matrix.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace scrcl {

struct MarkerEntry {
    std::string gene_id;
    double score = 0.0;  // rank-sum z, cluster vs rest
    double mean_in = 0.0;
    double mean_out = 0.0;
    double frac_in = 0.0;  // fraction of cluster cells with expression > 0
};

/// clusters[t] holds every gene, sorted by descending score then gene id.
struct MarkerReport {
    std::vector<std::vector<MarkerEntry>> clusters;
};

/// Wilcoxon rank-sum z per gene and cluster (cluster vs all other cells),
/// average ranks for ties with the tie-corrected variance, no continuity
/// correction. A gene with no rank spread scores 0.
MarkerReport deg_scores(const ExpressionMatrix& x, std::span<const int> labels);

/// First `n` gene ids per cluster.
std::vector<std::vector<std::string>> top_markers(const MarkerReport& report, std::size_t n);

/// TSV `cluster rank gene z mean_in mean_out frac_in` with a header line.
void write_marker_report(const std::filesystem::path& path, const MarkerReport& report,
                         std::size_t top_n = 0);

/// CSV `id,label,z_1..z_p`; the label column is omitted when `labels` is empty.
void export_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const Matrix& z, std::span<const int> labels = {});

struct EmbeddingTable {
    std::vector<std::string> ids;
    std::vector<int> labels;  // empty when the file has no label column
    Matrix z;
};

EmbeddingTable read_embeddings(const std::filesystem::path& path);

}  // namespace scrcl
