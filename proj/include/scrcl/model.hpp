#pragma once

#include "scrcl/autodiff.hpp"
#include "scrcl/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace scrcl {

enum class EncoderKind { Mlp, Gcn };

std::string to_string(EncoderKind kind);

struct ModelConfig {
    Index n_cells = 0;   // N, fixes the gene encoder's input width
    Index n_genes = 0;   // M
    Index hidden = 256;  // h
    Index latent = 64;   // d
    Index gene_hidden = 128;
    Index clusters = 2;  // c
    EncoderKind view_m = EncoderKind::Mlp;
    EncoderKind view_g = EncoderKind::Gcn;
    /// false replaces E W U by E P with a shared d x c projection P.
    bool refine = true;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate(const ModelConfig& cfg);

/// One cell-view encoder. MLPs carry biases; GCN layers have none (b1, b2 empty).
struct ViewEncoder {
    EncoderKind kind = EncoderKind::Mlp;
    Matrix w1;  // M x h
    Matrix b1;  // 1 x h
    Matrix w2;  // h x d
    Matrix b2;  // 1 x d

    friend bool operator==(const ViewEncoder&, const ViewEncoder&) = default;
};

/// Two-layer GCN over the gene graph.
struct GeneEncoder {
    Matrix w1;  // N x h_g
    Matrix w2;  // h_g x c

    friend bool operator==(const GeneEncoder&, const GeneEncoder&) = default;
};

struct EncoderParams {
    ViewEncoder view_m;
    ViewEncoder view_g;
    GeneEncoder gene;

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct RefinementParams {
    Matrix w;           // d x M bridge, present when refining
    Matrix projection;  // d x c, present only without refinement

    friend bool operator==(const RefinementParams&, const RefinementParams&) = default;
};

struct ModelParams {
    ModelConfig config;
    EncoderParams encoders;
    RefinementParams refinement;

    /// Every learnable matrix in a fixed order, with a stable name.
    std::vector<std::pair<std::string, Matrix*>> named();
    std::vector<std::pair<std::string, const Matrix*>> named() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights, zero biases, refinement bridge uniform in +-1e-2.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct EmbeddingPair {
    Matrix e_m;  // N x d
    Matrix e_g;  // N x d
};

struct RefinedEmbeddings {
    Matrix z_m;  // N x c
    Matrix z_g;  // N x c
    Matrix u;    // M x c (empty without refinement)
};

// Tape-level building blocks.

ad::Var mlp_forward(ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2);
/// A_hat ReLU(A_hat X W1) W2.
ad::Var gcn_forward(ad::Var x, ad::Var a_hat, ad::Var w1, ad::Var w2);

struct RefineVars {
    ad::Var association;  // E W, N x M
    ad::Var z;            // E W U, N x c
};
RefineVars refine(ad::Var e, ad::Var w, ad::Var u);

/// Fixed inputs of a forward pass.
struct ModelInputs {
    Matrix x;      // N x M
    Matrix a_hat;  // N x N
    Matrix g_hat;  // M x M
};

/// Parameters bound to leaves of one tape, in ModelParams::named() order.
struct ParamVars {
    std::vector<ad::Var> leaves;
    ad::Var m_w1, m_b1, m_w2, m_b2;
    ad::Var g_w1, g_b1, g_w2, g_b2;
    ad::Var gene_w1, gene_w2;
    ad::Var w, projection;
};

ParamVars bind(ad::Tape& tape, const ModelParams& params, bool trainable = true);
/// Uses existing leaves, given in `ModelParams::named()` order.
ParamVars bind(const ModelParams& params, std::span<const ad::Var> leaves);

struct ForwardVars {
    ad::Var e_m, e_g;
    ad::Var u;  // invalid without refinement
    ad::Var z_m, z_g;
};

ForwardVars forward(ad::Tape& tape, const ParamVars& p, const ModelConfig& cfg, const ModelInputs& in);

// Matrix-level conveniences for inspection and tests.

Matrix mlp_forward(const Matrix& x, const ViewEncoder& p);
Matrix gcn_forward(const Matrix& x, const Matrix& a_hat, const ViewEncoder& p);
/// U = A_hat_g ReLU(A_hat_g X^T W1) W2 for X^T given as M x N.
Matrix gene_encode(const Matrix& xt, const Matrix& g_hat, const GeneEncoder& p);

struct Refined {
    Matrix association;
    Matrix z;
};
Refined refine(const Matrix& e, const Matrix& w, const Matrix& u);

/// Runs the encoders and the refinement (or projection) once.
std::pair<EmbeddingPair, RefinedEmbeddings> embed(const ModelParams& params, const ModelInputs& in);

/// Binary checkpoint:
///   "SCRCL1" | u64 json_len | json | u64 n_blocks |
///   n_blocks x (u64 name_len | name | u64 rows | u64 cols | rows*cols f64)
/// with all integers and floats little-endian and values row-major. The json
/// holds {"model": <ModelConfig>, "train": <caller-supplied echo>}.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& train_config_json = "{}");

struct Checkpoint {
    ModelParams params;
    std::string train_config_json;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace scrcl
