#include "doctest.h"
#include "fixtures.hpp"

#include "scrcl/error.hpp"

#include <cmath>

using namespace scrcl;
using namespace scrcl::testing;

namespace {

double max_abs_diff(const Matrix& m, const oracle::Table& t) {
    double worst = 0.0;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            worst = std::max(worst, std::abs(m(i, j) - t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("skl") {
    const std::vector<double> p{0.8, 0.2}, q{0.2, 0.8};
    CHECK(skl(p, p) == 0.0);
    CHECK(std::abs(skl(p, q) - 1.2 * std::log(4.0)) < 1e-9);
    CHECK(skl(p, q) == doctest::Approx(1.6636).epsilon(1e-4));

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_distribution(5, rng), b = random_distribution(5, rng);
        CHECK(std::abs(skl(a, b) - skl(b, a)) < 1e-15);
        CHECK(std::abs(skl(a, b) - oracle::skl(a, b)) < 1e-9);
        CHECK(skl(a, b) >= 0.0);
    }

    const std::vector<double> unnormalized{0.5, 0.6}, negative{1.5, -0.5}, three{0.2, 0.3, 0.5};
    CHECK_THROWS_AS(skl(unnormalized, q), ParameterError);
    CHECK_THROWS_AS(skl(negative, q), ParameterError);
    CHECK_THROWS_AS(skl(three, q), DimensionError);
}

TEST_CASE("p_cell and p_global") {
    const Matrix constant = Matrix::Constant(4, 3, 2.5);
    CHECK((p_cell(constant).array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
    CHECK((p_global(constant).array() - 1.0 / 4).abs().maxCoeff() < 1e-15);

    std::mt19937_64 rng(2);
    CHECK(p_global(random_matrix(1, 5, rng)) == Matrix::Ones(1, 5));

    Matrix e(2, 2);
    e << 0, std::log(3.0), 0, 0;
    const Matrix pc = p_cell(e);
    CHECK(std::abs(pc(0, 0) - 0.25) < 1e-15);
    CHECK(std::abs(pc(0, 1) - 0.75) < 1e-15);
}

TEST_CASE("loss_hea") {
    std::mt19937_64 rng(3);
    const Matrix a = random_matrix(4, 3, rng, -2, 2);
    CHECK(loss_hea(a, a) == 0.0);

    SUBCASE("row shift only moves the global term") {
        const Matrix b = random_matrix(4, 3, rng, -2, 2);
        Matrix shifted = b;
        for (Index i = 0; i < 4; ++i) shifted.row(i).array() += static_cast<double>(i) * 0.7;
        double cell_b = 0.0, cell_s = 0.0;
        const Matrix pa = p_cell(a), pb = p_cell(b), ps = p_cell(shifted);
        for (Index i = 0; i < 4; ++i) {
            const std::vector<double> ra(pa.row(i).begin(), pa.row(i).end());
            const std::vector<double> rb(pb.row(i).begin(), pb.row(i).end());
            const std::vector<double> rs(ps.row(i).begin(), ps.row(i).end());
            cell_b += skl(ra, rb);
            cell_s += skl(ra, rs);
        }
        CHECK(std::abs(cell_b - cell_s) < 1e-12);
        CHECK(std::abs(loss_hea(a, b) - loss_hea(a, shifted)) > 1e-6);
    }
    SUBCASE("random pairs match the naive oracle") {
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix m = random_matrix(4, 3, rng, -2, 2), g = random_matrix(4, 3, rng, -2, 2);
            CHECK(std::abs(loss_hea(m, g) - oracle::hea(to_table(m), to_table(g))) < 1e-9);
        }
    }
    CHECK_THROWS_AS(loss_hea(Matrix::Zero(3, 2), Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("kappa_matrix") {
    std::mt19937_64 rng(4);
    const Matrix a = random_matrix(3, 4, rng, -2, 2), b = random_matrix(3, 4, rng, -2, 2);
    const Matrix self = kappa_matrix(a, a);
    CHECK(self.diagonal().cwiseAbs().maxCoeff() == 0.0);

    const Matrix k = kappa_matrix(a, b);
    CHECK(max_abs_diff(k, oracle::kappa(to_table(a), to_table(b))) < 1e-9);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-6);
    CHECK(k.minCoeff() >= 0.0);
    CHECK_THROWS_AS(kappa_matrix(a, Matrix::Zero(3, 3)), DimensionError);
}

TEST_CASE("loss_ndc") {
    std::mt19937_64 rng(5);
    SUBCASE("constant kappa gives 1") {
        const CellGraph g = random_graph(6, rng);
        CHECK(std::abs(loss_ndc(Matrix::Constant(6, 6, 0.7), g) - 1.0) < 1e-9);
    }
    SUBCASE("zero within groups, one elsewhere") {
        CellGraph g(4);
        g.add_edge(0, 1);
        g.add_edge(2, 3);
        Matrix k = Matrix::Ones(4, 4);
        for (Index i = 0; i < 4; ++i) k(i, i) = 0;
        k(0, 1) = k(1, 0) = k(2, 3) = k(3, 2) = 0;
        CHECK(loss_ndc(k, g) == 0.0);
    }
    SUBCASE("identical views on a complete graph match the oracle") {
        const Matrix e = random_matrix(5, 3, rng, -2, 2);
        CellGraph g(5);
        for (Index i = 0; i < 5; ++i) {
            for (Index j = i + 1; j < 5; ++j) g.add_edge(i, j);
        }
        const Matrix k = kappa_matrix(e, e);
        CHECK(std::abs(loss_ndc(k, g) - oracle::ndc(to_table(k), adjacency_table(g))) < 1e-9);
    }
    SUBCASE("random kappa and graph") {
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix k = random_matrix(7, 7, rng, 0, 3);
            const CellGraph g = random_graph(7, rng);
            CHECK(std::abs(loss_ndc(k, g) - oracle::ndc(to_table(k), adjacency_table(g))) < 1e-9);
        }
    }
    CHECK_THROWS_AS(loss_ndc(Matrix::Zero(1, 1), CellGraph(1)), ParameterError);
    CHECK_THROWS_AS(loss_ndc(Matrix::Zero(3, 3), CellGraph(4)), DimensionError);
}

TEST_CASE("cross-view similarity and loss_cvc") {
    std::mt19937_64 rng(6);
    Matrix unit = random_matrix(4, 3, rng);
    unit.rowwise().normalize();
    const Matrix s = cross_view_similarity(unit, unit);
    CHECK((s.diagonal().array() - 1.0).abs().maxCoeff() < 1e-15);

    const Matrix zm = random_matrix(5, 3, rng), zg = random_matrix(5, 3, rng);
    const Matrix sim = cross_view_similarity(zm, zg);
    CHECK(max_abs_diff(sim, oracle::cosine(to_table(zm), to_table(zg))) < 1e-12);
    CHECK(sim.cwiseAbs().maxCoeff() <= 1.0 + 1e-15);

    Matrix with_zero = zm;
    with_zero.row(2).setZero();
    const Matrix sz = cross_view_similarity(with_zero, zg);
    CHECK(sz.allFinite());
    CHECK(sz.row(2).cwiseAbs().maxCoeff() == 0.0);

    const CellGraph g = random_graph(4, rng);
    const Matrix target = g.adjacency() + Matrix::Identity(4, 4);
    CHECK(loss_cvc(target, g) == 0.0);
    CHECK(loss_cvc(Matrix::Zero(1, 1), CellGraph(1)) == 1.0);
    const Matrix r = random_matrix(4, 4, rng);
    CHECK(std::abs(loss_cvc(r, g) - oracle::cvc(to_table(r), adjacency_table(g))) < 1e-12);
    CHECK_THROWS_AS(loss_cvc(r, CellGraph(3)), DimensionError);
}

TEST_CASE("total_loss") {
    CHECK(total_loss(1.5, 2, 3, 0, 0).total == 1.5);
    const LossBreakdown b = total_loss(1, 2, 3, 0.5, 2);
    CHECK(b.total == 8.0);
    CHECK(b.hea == 1.0);
    CHECK(b.ndc == 2.0);
    CHECK(b.cvc == 3.0);
    CHECK_THROWS_AS(total_loss(1, 2, 3, -0.1, 1), ParameterError);
    CHECK_THROWS_AS(total_loss(1, 2, 3, 1, -1), ParameterError);
}

TEST_CASE("losses stay finite and non-negative near zero probabilities") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        // Logit gaps of several hundred push softmax entries below 1e-100.
        const Matrix m = random_matrix(5, 4, rng, -400, 400), g = random_matrix(5, 4, rng, -400, 400);
        const double h = loss_hea(m, g);
        const Matrix k = kappa_matrix(m, g);
        const double n = loss_ndc(k, random_graph(5, rng));
        CHECK(std::isfinite(h));
        CHECK(h >= 0.0);
        CHECK(k.allFinite());
        CHECK(k.minCoeff() >= 0.0);
        CHECK(std::isfinite(n));
        CHECK(n >= 0.0);
    }
    const std::vector<double> spike{1.0, 0.0}, flat{0.0, 1.0};
    CHECK(std::isfinite(skl(spike, flat)));
}

TEST_CASE("tape losses differentiate against central differences") {
    std::mt19937_64 rng(8);
    const CellGraph g = random_graph(5, rng);
    const GraphMasks masks = make_masks(g);
    ad::ScalarFn f = [&](ad::Tape&, std::span<const ad::Var> p) {
        ad::Var k = losses::kappa(p[0], p[1]);
        ad::Var s = losses::similarity(p[0], p[1]);
        return ad::add(ad::add(losses::hea(p[0], p[1]), losses::ndc(k, masks)), losses::cvc(s, masks));
    };
    const auto r = ad::grad_check(f, {random_matrix(5, 3, rng, -2, 2), random_matrix(5, 3, rng, -2, 2)}, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
}
