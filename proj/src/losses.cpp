#include "scrcl/losses.hpp"

#include "scrcl/error.hpp"

#include <cmath>
#include <string>

namespace scrcl {

namespace {

void check_distribution(std::span<const double> p, const char* name) {
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ParameterError(std::string("skl: ") + name + " has a negative or non-finite entry");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw ParameterError(std::string("skl: ") + name + " sums to " + std::to_string(total) + ", not 1");
    }
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

void require_graph(const char* op, const Matrix& square, const CellGraph& graph) {
    if (square.rows() != square.cols() || square.rows() != graph.size()) {
        throw DimensionError(std::string(op) + ": matrix " + shape_string(square) + " does not match a graph of " +
                             std::to_string(graph.size()) + " nodes");
    }
}

}  // namespace

double skl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw DimensionError("skl: length mismatch " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
    }
    check_distribution(p, "p");
    check_distribution(q, "q");
    ad::Tape t;
    Matrix pm = Eigen::Map<const Matrix>(p.data(), 1, static_cast<Index>(p.size()));
    Matrix qm = Eigen::Map<const Matrix>(q.data(), 1, static_cast<Index>(q.size()));
    return ad::skl_rows(t.constant(std::move(pm)), t.constant(std::move(qm))).value()(0, 0);
}

Matrix p_cell(const Matrix& e) { return softmax_rows(e); }
Matrix p_global(const Matrix& e) { return softmax_cols(e); }

double loss_hea(const Matrix& e_m, const Matrix& e_g) {
    require_same_shape("loss_hea", e_m, e_g);
    ad::Tape t;
    return losses::hea(t.constant(e_m), t.constant(e_g)).scalar();
}

Matrix kappa_matrix(const Matrix& e_m, const Matrix& e_g) {
    require_same_shape("kappa_matrix", e_m, e_g);
    ad::Tape t;
    return losses::kappa(t.constant(e_m), t.constant(e_g)).value();
}

double loss_ndc(const Matrix& kappa, const CellGraph& graph) {
    if (kappa.rows() < 2) throw ParameterError("loss_ndc: need at least 2 cells");
    require_graph("loss_ndc", kappa, graph);
    ad::Tape t;
    return losses::ndc(t.constant(kappa), make_masks(graph)).scalar();
}

Matrix cross_view_similarity(const Matrix& z_m, const Matrix& z_g) {
    require_same_shape("cross_view_similarity", z_m, z_g);
    ad::Tape t;
    return losses::similarity(t.constant(z_m), t.constant(z_g)).value();
}

double loss_cvc(const Matrix& s, const CellGraph& graph) {
    require_graph("loss_cvc", s, graph);
    ad::Tape t;
    return losses::cvc(t.constant(s), make_masks(graph)).scalar();
}

LossBreakdown total_loss(double hea, double ndc, double cvc, double alpha, double beta, double gamma) {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
        throw ParameterError("total_loss: weights must be non-negative");
    }
    LossBreakdown b;
    b.hea = hea;
    b.ndc = ndc;
    b.cvc = cvc;
    b.alpha = alpha;
    b.beta = beta;
    b.gamma = gamma;
    b.total = gamma * hea + alpha * ndc + beta * cvc;
    return b;
}

GraphMasks make_masks(const CellGraph& graph) {
    const Index n = graph.size();
    GraphMasks m;
    m.with_self = graph.adjacency() + Matrix::Identity(n, n);
    m.off_diagonal = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    m.inv_group.resize(n, 1);
    for (Index i = 0; i < n; ++i) m.inv_group(i, 0) = 1.0 / static_cast<double>(graph.degree(i) + 1);
    return m;
}

namespace losses {

ad::Var hea(ad::Var e_m, ad::Var e_g) {
    // Global term: column j of p_global is one distribution over cells, so
    // transposing turns the per-column SKL into a per-row one.
    ad::Var global = ad::sum(ad::skl_rows(ad::transpose(ad::softmax_cols(e_m)),
                                          ad::transpose(ad::softmax_cols(e_g))));
    ad::Var cell = ad::sum(ad::skl_rows(ad::softmax_rows(e_m), ad::softmax_rows(e_g)));
    return ad::add(global, cell);
}

ad::Var kappa(ad::Var e_m, ad::Var e_g) {
    return ad::skl_pairwise(ad::softmax_rows(e_m), ad::softmax_rows(e_g));
}

ad::Var ndc(ad::Var kappa, const GraphMasks& masks) {
    ad::Tape& t = *kappa.tape();
    const Index n = kappa.rows();
    ad::Var positive = ad::hadamard(ad::row_sum(ad::hadamard(kappa, t.constant(masks.with_self))),
                                    t.constant(masks.inv_group));
    ad::Var all_others = ad::row_sum(ad::hadamard(kappa, t.constant(masks.off_diagonal)));
    ad::Var denom = ad::add_scalar(ad::scale(all_others, 1.0 / static_cast<double>(n - 1)), kNdcEps);
    return ad::mean(ad::divide(positive, denom));
}

ad::Var similarity(ad::Var z_m, ad::Var z_g) {
    return ad::matmul(ad::row_normalize(z_m), ad::transpose(ad::row_normalize(z_g)));
}

ad::Var cvc(ad::Var s, const GraphMasks& masks) {
    ad::Tape& t = *s.tape();
    ad::Var diff = ad::sub(s, t.constant(masks.with_self));
    return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(s.rows()));
}

}  // namespace losses

}  // namespace scrcl
