#pragma once

#include "scrcl/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scrcl {

/// N x M non-negative cell-by-gene matrix with its id vectors.
class ExpressionMatrix {
  public:
    ExpressionMatrix() = default;
    /// Validates shape, non-negativity, finiteness and unique gene ids.
    /// Files must hold at least 2x2; gene selection may leave fewer.
    ExpressionMatrix(Matrix values, std::vector<std::string> cell_ids,
                     std::vector<std::string> gene_ids);

    const Matrix& values() const { return values_; }
    const std::vector<std::string>& cell_ids() const { return cell_ids_; }
    const std::vector<std::string>& gene_ids() const { return gene_ids_; }
    Index n_cells() const { return values_.rows(); }
    Index n_genes() const { return values_.cols(); }

    friend bool operator==(const ExpressionMatrix&, const ExpressionMatrix&) = default;

  private:
    Matrix values_;
    std::vector<std::string> cell_ids_;
    std::vector<std::string> gene_ids_;
};

enum class MatrixFormat { Csv, Mtx };

MatrixFormat parse_matrix_format(const std::string& name);

/// CSV: header `id,<gene...>`, one row per cell.
/// MTX: coordinate Matrix Market file with `genes.tsv` and `barcodes.tsv`
/// next to it. Rows are cells; a file whose shape is genes x barcodes is
/// read as the transposed (10x-style) layout.
ExpressionMatrix load_expression(const std::filesystem::path& path, MatrixFormat format);
void write_expression(const ExpressionMatrix& x, const std::filesystem::path& path,
                      MatrixFormat format);

/// String labels keyed by cell id, densified in first-appearance order.
struct LabelTable {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::string> names;  // names[label]
};

LabelTable read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const std::vector<int>& labels);

/// Reads `id,x,y` and returns coordinates in `cell_ids` order. Every cell
/// must appear exactly once.
Matrix read_coords(const std::filesystem::path& path, const std::vector<std::string>& cell_ids);
void write_coords(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const Matrix& coords);

/// Reorders a label table to `cell_ids`; throws when the id sets differ.
std::vector<int> align_labels(const LabelTable& table, const std::vector<std::string>& cell_ids);

struct Dataset {
    ExpressionMatrix expression;
    std::optional<std::vector<int>> labels;
    std::optional<Matrix> coords;  // N x 2
    std::optional<int> n_types;
};

struct PreprocessConfig {
    double target_sum = 1e4;
    bool log1p = true;
    /// Number of highly variable genes to keep; nullopt keeps all.
    std::optional<Index> n_hvg = 2000;
};

/// Library-size normalization, optional log1p, then top-variance gene
/// selection. Cell and surviving gene order are preserved.
ExpressionMatrix preprocess(const ExpressionMatrix& x, const PreprocessConfig& cfg = {});

enum class SpatialLayout { None, LayeredBands };

struct SyntheticSpec {
    Index n_cells = 300;
    Index n_genes = 200;
    int n_types = 3;
    Index markers_per_type = 10;
    double marker_lift = 4.0;
    double noise_sd = 1.0;
    double dropout_rate = 0.2;
    SpatialLayout spatial_layout = SpatialLayout::None;
    std::uint64_t seed = 0;
};

void validate(const SyntheticSpec& spec);

/// Type-balanced clamped-Gaussian expression with planted marker blocks.
/// Type t owns genes [t * markers_per_type, (t + 1) * markers_per_type).
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Gene ids of the marker block planted for `type`.
std::vector<std::string> planted_markers(const SyntheticSpec& spec, int type);

}  // namespace scrcl
