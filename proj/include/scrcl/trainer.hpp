#pragma once

#include "scrcl/graphs.hpp"
#include "scrcl/ingest.hpp"
#include "scrcl/losses.hpp"
#include "scrcl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scrcl {

/// Structural and objective ablations.
struct AblationSet {
    bool no_hea = false;
    bool no_ndc = false;
    bool no_cvc = false;
    bool mlp_only = false;
    bool gcn_only = false;
    bool no_refine = false;

    bool empty() const { return !(no_hea || no_ndc || no_cvc || mlp_only || gcn_only || no_refine); }
    friend bool operator==(const AblationSet&, const AblationSet&) = default;
};

/// Parses a comma-separated flag list such as "no_ndc,mlp_only"; "" and
/// "none" give the full model.
AblationSet parse_ablation(const std::string& list);
std::string to_string(const AblationSet& a);

struct TrainConfig {
    Index latent = 64;
    Index hidden = 256;
    Index gene_hidden = 128;
    Index clusters = 0;  // c; must be set before training
    double alpha = 1.0;
    double beta = 1.0;
    double lr = 1e-3;
    int epochs = 400;
    std::uint64_t seed = 0;
    Index k_cell = 15;
    Index k_gene = 10;
    GraphMode graph_mode = GraphMode::Expression;
    CellMetric metric = CellMetric::Cosine;
    AblationSet ablation;
};

void validate(const TrainConfig& cfg);

/// Loss weights and architecture after applying the ablation flags.
struct EffectiveSetup {
    double gamma = 1.0;  // weight of the alignment term
    double alpha = 1.0;
    double beta = 1.0;
    ModelConfig model;
};

/// Throws ConfigError for mlp_only + gcn_only or when every loss term is removed.
EffectiveSetup apply_ablation(const TrainConfig& cfg, Index n_cells, Index n_genes);

struct TrainReport {
    std::vector<LossBreakdown> loss_trace;  // one entry per epoch, before its update
    ModelParams final_params;
    EmbeddingPair embeddings;
    RefinedEmbeddings refined;
    double wall_time_s = 0.0;
};

/// Dense inputs for a forward pass: X, normalized cell and gene adjacencies.
ModelInputs make_inputs(const ExpressionMatrix& x, const CellGraph& cells, const GeneGraph& genes);

struct Objective {
    ad::Var hea, ndc, cvc, total;
    ForwardVars forward;
};

/// Records the forward pass and all three terms; only terms with a nonzero
/// weight enter `total`.
Objective build_objective(ad::Tape& tape, const ParamVars& pv, const ModelConfig& model, const ModelInputs& in,
                          const GraphMasks& masks, const EffectiveSetup& setup);

/// Evaluates every term for fixed parameters (no gradient).
LossBreakdown evaluate_loss(const ModelParams& params, const ModelInputs& in, const GraphMasks& masks,
                            const EffectiveSetup& setup);

/// Full-batch Adam (0.9, 0.999, 1e-8) on the weighted objective.
/// Throws NumericError when a loss turns non-finite.
TrainReport train(const ExpressionMatrix& x, const CellGraph& cell_graph, const GeneGraph& gene_graph,
                  const TrainConfig& cfg);

/// Loss trace CSV: `epoch,hea,ndc,cvc,total`, epochs counted from 1.
void write_loss_trace(const std::filesystem::path& path, const std::vector<LossBreakdown>& trace);

}  // namespace scrcl
