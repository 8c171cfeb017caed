#include "doctest.h"
#include "fixtures.hpp"

#include "scrcl/error.hpp"

#include "json.hpp"

#include <cmath>
#include <limits>

using namespace scrcl;
using namespace scrcl::testing;

namespace {

Matrix two_blobs(Index per_blob, double gap, double spread, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, spread);
    Matrix z(2 * per_blob, 2);
    for (Index i = 0; i < z.rows(); ++i) {
        z(i, 0) = (i < per_blob ? 0.0 : gap) + noise(rng);
        z(i, 1) = noise(rng);
    }
    return z;
}

/// Plain Lloyd iterations from k distinct random points; returns inertia.
double lloyd_from_random(const Matrix& z, int k, std::mt19937_64& rng) {
    std::vector<Index> idx(static_cast<std::size_t>(z.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix c(k, z.cols());
    for (int j = 0; j < k; ++j) c.row(j) = z.row(idx[static_cast<std::size_t>(j)]);
    std::vector<int> assign(static_cast<std::size_t>(z.rows()), -1);
    for (int it = 0; it < 1000; ++it) {
        bool changed = false;
        for (Index i = 0; i < z.rows(); ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j) {
                if ((z.row(i) - c.row(j)).squaredNorm() < (z.row(i) - c.row(best)).squaredNorm()) best = j;
            }
            changed |= assign[static_cast<std::size_t>(i)] != best;
            assign[static_cast<std::size_t>(i)] = best;
        }
        if (!changed) break;
        Matrix sums = Matrix::Zero(k, z.cols());
        std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
        for (Index i = 0; i < z.rows(); ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += z.row(i);
            counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1.0;
        }
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) c.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
        }
    }
    double inertia = 0.0;
    for (Index i = 0; i < z.rows(); ++i) inertia += (z.row(i) - c.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    return inertia;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
        }
    }
    return true;
}

std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::vector<int> out(n);
    // Dense labels: every value 0..k-1 appears at least once.
    for (std::size_t i = 0; i < n; ++i) out[i] = i < static_cast<std::size_t>(k) ? static_cast<int>(i) : pick(rng);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

}  // namespace

TEST_CASE("concat_embed") {
    std::mt19937_64 rng(1);
    const Matrix zm = random_matrix(4, 3, rng);
    const Matrix z = concat_embed(zm, Matrix::Zero(4, 3));
    CHECK(z.cols() == 6);
    CHECK(z.rightCols(3) == Matrix::Zero(4, 3));
    const Matrix zg = random_matrix(4, 3, rng);
    const Matrix both = concat_embed(zm, zg);
    for (Index i = 0; i < 4; ++i) {
        CHECK(both.row(i).head(3) == zm.row(i));
        CHECK(both.row(i).tail(3) == zg.row(i));
    }
    CHECK_THROWS_AS(concat_embed(zm, Matrix::Zero(3, 3)), DimensionError);
}

TEST_CASE("kmeans") {
    std::mt19937_64 rng(2);
    SUBCASE("well separated clouds split exactly") {
        const Matrix z = two_blobs(20, 100.0, 1.0, rng);
        const auto c = kmeans(z, 2, 0);
        std::vector<int> truth(40, 0);
        std::fill(truth.begin() + 20, truth.end(), 1);
        CHECK(same_partition(c.labels, truth));
        CHECK(c.k == 2);
    }
    SUBCASE("k = N gives zero inertia") {
        const Matrix z = random_matrix(7, 3, rng);
        CHECK(kmeans(z, 7, 3).inertia < 1e-24);
    }
    SUBCASE("50-point fixture reaches the best of 200 random restarts") {
        const Matrix z = two_blobs(25, 4.0, 1.0, rng);
        double best = std::numeric_limits<double>::infinity();
        std::mt19937_64 init(99);
        for (int r = 0; r < 200; ++r) best = std::min(best, lloyd_from_random(z, 2, init));
        CHECK(std::abs(kmeans(z, 2, 0).inertia - best) < 1e-9);
    }
    SUBCASE("rotation leaves the partition unchanged") {
        const Matrix z = two_blobs(15, 30.0, 1.0, rng);
        const double t = 0.83;
        Matrix rot(2, 2);
        rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
        CHECK(same_partition(kmeans(z, 2, 5).labels, kmeans(z * rot, 2, 5).labels));
    }
    SUBCASE("deterministic per seed") {
        const Matrix z = random_matrix(30, 4, rng);
        const auto a = kmeans(z, 3, 11), b = kmeans(z, 3, 11);
        CHECK(a.labels == b.labels);
        CHECK(a.inertia == b.inertia);
    }
    SUBCASE("errors") {
        const Matrix z = random_matrix(3, 2, rng);
        CHECK_THROWS_AS(kmeans(z, 4, 0), ParameterError);
        CHECK_THROWS_AS(kmeans(z, 0, 0), ParameterError);
    }
}

TEST_CASE("metric examples") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2};
    const std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
    CHECK(metric_acc(a, a) == 1.0);
    CHECK(metric_acc(relabeled, a) == 1.0);
    CHECK(metric_nmi(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(metric_ari(a, a) == 1.0);

    const std::vector<int> pred{0, 0, 1, 1, 1}, truth{0, 1, 1, 1, 0};
    CHECK(metric_acc(pred, truth) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(oracle::accuracy(pred, truth) == doctest::Approx(0.6).epsilon(1e-15));

    const std::vector<int> constant{0, 0, 0, 0}, balanced{0, 0, 1, 1};
    CHECK(metric_nmi(constant, balanced) == 0.0);
    CHECK(std::abs(metric_ari(constant, balanced)) < 1e-15);

    const std::vector<int> p4{0, 0, 0, 1}, t4{0, 0, 1, 1};
    // Pairs: same in both {01}; same only in pred {02, 12}; same only in truth {23}.
    // expected = 3 * 2 / 6 = 1, max = 2.5, ARI = (1 - 1) / (2.5 - 1) = 0.
    CHECK(std::abs(metric_ari(p4, t4) - oracle::ari(p4, t4)) < 1e-15);
    CHECK(std::abs(metric_ari(p4, t4)) < 1e-15);

    const std::vector<int> short_one{0, 1};
    CHECK_THROWS_AS(metric_acc(short_one, a), DimensionError);
    CHECK_THROWS_AS(metric_nmi(short_one, a), DimensionError);
    CHECK_THROWS_AS(metric_ari(short_one, a), DimensionError);
}

TEST_CASE("metrics agree with enumeration oracles") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> kpick(1, 6), npick(6, 12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = static_cast<std::size_t>(npick(rng));
        const std::vector<int> pred = random_labels(n, std::min<int>(kpick(rng), static_cast<int>(n)), rng);
        const std::vector<int> truth = random_labels(n, std::min<int>(kpick(rng), static_cast<int>(n)), rng);
        CHECK(std::abs(metric_acc(pred, truth) - oracle::accuracy(pred, truth)) < 1e-12);
        CHECK(std::abs(metric_nmi(pred, truth) - oracle::nmi(pred, truth)) < 1e-12);
        CHECK(std::abs(metric_ari(pred, truth) - oracle::ari(pred, truth)) < 1e-12);

        // Relabeling invariance.
        std::vector<int> perm(6);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> moved(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) moved[i] = perm[static_cast<std::size_t>(pred[i])];
        CHECK(std::abs(metric_acc(moved, truth) - metric_acc(pred, truth)) < 1e-12);
        CHECK(std::abs(metric_nmi(moved, truth) - metric_nmi(pred, truth)) < 1e-12);
        CHECK(std::abs(metric_ari(moved, truth) - metric_ari(pred, truth)) < 1e-12);

        // ACC is at least the largest single contingency cell.
        const Matrix table = contingency(pred, truth);
        CHECK(metric_acc(pred, truth) + 1e-12 >= table.maxCoeff() / static_cast<double>(n));

        const MetricsReport r = evaluate(pred, truth);
        CHECK(r.acc >= 0.0);
        CHECK(r.acc <= 1.0);
        CHECK(r.nmi >= -1e-12);
        CHECK(r.nmi <= 1.0 + 1e-12);
        CHECK(r.ari >= -1.0);
        CHECK(r.ari <= 1.0 + 1e-12);
    }
}

TEST_CASE("assignment solver matches brute force") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w = random_matrix(5, 5, rng, 0, 10);
        const auto a = max_weight_assignment(w);
        double got = 0.0;
        for (Index r = 0; r < 5; ++r) got += w(r, a[static_cast<std::size_t>(r)]);
        std::vector<int> perm{0, 1, 2, 3, 4};
        double best = 0.0;
        do {
            double s = 0.0;
            for (Index r = 0; r < 5; ++r) s += w(r, perm[static_cast<std::size_t>(r)]);
            best = std::max(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(std::abs(got - best) < 1e-12);
    }
}

TEST_CASE("metrics output formats") {
    const MetricsReport r{0.5, 0.25, 0.125};
    const auto j = nlohmann::json::parse(metrics_json(r));
    CHECK(j.at("acc").get<double>() == 0.5);
    CHECK(j.at("nmi").get<double>() == 0.25);
    CHECK(j.at("ari").get<double>() == 0.125);
    const std::string table = metrics_table(r);
    CHECK(table.find("ACC") != std::string::npos);
    CHECK(table.find("0.5") != std::string::npos);
}
