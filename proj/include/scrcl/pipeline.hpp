#pragma once

#include "scrcl/analysis.hpp"
#include "scrcl/cluster.hpp"
#include "scrcl/graphs.hpp"
#include "scrcl/ingest.hpp"
#include "scrcl/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace scrcl {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything needed to reproduce one run, including input locations.
struct RunConfig {
    std::string data;
    MatrixFormat format = MatrixFormat::Csv;
    std::string coords;
    std::string labels;
    PreprocessConfig preprocess;
    TrainConfig train;
    int restarts = 20;
    std::size_t top_markers = 3;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Overlays keys present in `j` onto `cfg`. A manifest (object with a
/// "config" member) is accepted as well.
void apply_json(RunConfig& cfg, const nlohmann::json& j);

/// Error raised by run_pipeline, tagged with the failing stage.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

struct PipelineResult {
    ExpressionMatrix processed;
    CellGraph cell_graph;
    GeneGraph gene_graph;
    TrainReport training;
    Matrix z;  // [Z^m | Z^g]
    ClusterAssignment clusters;
    std::optional<MetricsReport> metrics;
    MarkerReport markers;
};

/// preprocess -> graphs -> train -> concatenate -> k-means -> metrics -> markers.
/// The cluster count defaults to the dataset's type count.
PipelineResult run_pipeline(const Dataset& data, const RunConfig& cfg);

/// Reads expression, optional coordinates and labels named in `cfg`.
Dataset load_dataset(const RunConfig& cfg);

/// Lowercase hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace scrcl
