#pragma once

#include "scrcl/autodiff.hpp"
#include "scrcl/graphs.hpp"
#include "scrcl/matrix.hpp"

#include <span>

namespace scrcl {

/// Per-term values of one objective evaluation.
/// total == gamma*hea + alpha*ndc + beta*cvc, where gamma is 1 unless the
/// alignment term is ablated.
struct LossBreakdown {
    double hea = 0.0;
    double ndc = 0.0;
    double cvc = 0.0;
    double total = 0.0;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
};

/// Guard added to the neighborhood-contrast denominator.
inline constexpr double kNdcEps = 1e-12;

/// KL(p||q) + KL(q||p) with kLogEps inside the logs. Inputs must be
/// non-negative and sum to 1 within 1e-6.
double skl(std::span<const double> p, std::span<const double> q);

/// Each row (cell) as a distribution over latent dimensions.
Matrix p_cell(const Matrix& e);
/// Each column (latent dimension) as a distribution over cells.
Matrix p_global(const Matrix& e);

/// Heterogeneous embedding alignment: per-column SKL of the global
/// distributions plus per-cell SKL of the row distributions.
double loss_hea(const Matrix& e_m, const Matrix& e_g);

/// kappa_ij = SKL(p_cell(e_m)_i, p_cell(e_g)_j).
Matrix kappa_matrix(const Matrix& e_m, const Matrix& e_g);

/// Neighborhood distribution contrast:
///   mean_i [ (k_ii + sum_{n in N_i} k_in) / (|N_i| + 1) ]
///          / [ sum_{j != i} k_ij / (N - 1) + eps ].
double loss_ndc(const Matrix& kappa, const CellGraph& graph);

/// S_ij = cos(z_m_i, z_g_j), norms floored at 1e-12.
Matrix cross_view_similarity(const Matrix& z_m, const Matrix& z_g);

/// (1/N) ||S - (A + I)||_F^2.
double loss_cvc(const Matrix& s, const CellGraph& graph);

/// Weighted sum of the three terms. Negative weights are rejected.
LossBreakdown total_loss(double hea, double ndc, double cvc, double alpha, double beta,
                         double gamma = 1.0);

/// Dense graph-derived constants reused every epoch.
struct GraphMasks {
    Matrix with_self;     // A + I
    Matrix off_diagonal;  // 1 - I
    Matrix inv_group;     // N x 1, 1 / (|N_i| + 1)
};

GraphMasks make_masks(const CellGraph& graph);

namespace losses {

ad::Var hea(ad::Var e_m, ad::Var e_g);
ad::Var kappa(ad::Var e_m, ad::Var e_g);
ad::Var ndc(ad::Var kappa, const GraphMasks& masks);
ad::Var similarity(ad::Var z_m, ad::Var z_g);
ad::Var cvc(ad::Var s, const GraphMasks& masks);

}  // namespace losses

}  // namespace scrcl
