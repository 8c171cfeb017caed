#include "doctest.h"
#include "fixtures.hpp"

#include "scrcl/error.hpp"

using namespace scrcl;
using namespace scrcl::testing;

namespace {

ViewEncoder mlp(Matrix w1, Matrix b1, Matrix w2, Matrix b2) {
    return {EncoderKind::Mlp, std::move(w1), std::move(b1), std::move(w2), std::move(b2)};
}

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

}  // namespace

TEST_CASE("mlp_forward") {
    SUBCASE("zero weights give zeros") {
        const ViewEncoder p = mlp(Matrix::Zero(3, 4), Matrix::Zero(1, 4), Matrix::Zero(4, 2), Matrix::Zero(1, 2));
        std::mt19937_64 rng(1);
        CHECK(mlp_forward(random_matrix(5, 3, rng), p) == Matrix::Zero(5, 2));
    }
    SUBCASE("hand-set 2x2 weights") {
        // h = relu([1 - 2 + 1.5, 0 + 2 - 3]) = [0.5, 0], out = h W2 + b2 = [1, 1.5]
        Matrix x(1, 2), w1(2, 2), b1(1, 2), w2(2, 2), b2(1, 2);
        x << 1, 2;
        w1 << 1, 0, -1, 1;
        b1 << 1.5, -3;
        w2 << 2, 1, 7, 7;
        b2 << 0, 1;
        Matrix expected(1, 2);
        expected << 1.0, 1.5;
        CHECK(mlp_forward(x, mlp(w1, b1, w2, b2)) == expected);
    }
    SUBCASE("rows permute with the input") {
        std::mt19937_64 rng(2);
        const ViewEncoder p =
            mlp(random_matrix(3, 5, rng), random_matrix(1, 5, rng), random_matrix(5, 2, rng), random_matrix(1, 2, rng));
        const Matrix x = random_matrix(4, 3, rng);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
        perm.indices() << 2, 0, 3, 1;
        const Matrix px = perm * x;
        CHECK((mlp_forward(px, p) - perm * mlp_forward(x, p)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("shape mismatch") {
        const ViewEncoder p = mlp(Matrix::Zero(3, 4), Matrix::Zero(1, 4), Matrix::Zero(4, 2), Matrix::Zero(1, 2));
        CHECK_THROWS_AS(mlp_forward(Matrix::Zero(2, 5), p), DimensionError);
    }
}

TEST_CASE("gcn_forward") {
    std::mt19937_64 rng(3);
    const Matrix w1 = random_matrix(3, 5, rng);
    const Matrix w2 = random_matrix(5, 2, rng);
    const ViewEncoder gcn{EncoderKind::Gcn, w1, {}, w2, {}};

    SUBCASE("identity propagation reduces to a bias-free MLP") {
        const Matrix x = random_matrix(4, 3, rng);
        const Matrix via_gcn = gcn_forward(x, Matrix::Identity(4, 4), gcn);
        const Matrix via_mlp = mlp_forward(x, mlp(w1, Matrix::Zero(1, 5), w2, Matrix::Zero(1, 2)));
        CHECK((via_gcn - via_mlp).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("two identical connected cells embed identically") {
        Matrix x = random_matrix(3, 3, rng);
        x.row(1) = x.row(0);
        UndirectedGraph g(3);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g.add_edge(0, 2);
        const Matrix e = gcn_forward(x, normalize_adjacency(g), gcn);
        CHECK((e.row(0) - e.row(1)).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("3-node path matches two-step dense propagation") {
        UndirectedGraph path(3);
        path.add_edge(0, 1);
        path.add_edge(1, 2);
        Matrix a(3, 3);
        const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0);
        a << 1.0 / 2, 1 / (s2 * s3), 0, 1 / (s2 * s3), 1.0 / 3, 1 / (s2 * s3), 0, 1 / (s2 * s3), 1.0 / 2;
        const Matrix x = random_matrix(3, 3, rng);
        const Matrix step1 = relu(a * x * w1);
        const Matrix expected = a * step1 * w2;
        CHECK((gcn_forward(x, normalize_adjacency(path), gcn) - expected).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("gene_encode") {
    std::mt19937_64 rng(4);
    SUBCASE("zero second layer gives zero U") {
        const GeneEncoder p{random_matrix(5, 3, rng), Matrix::Zero(3, 2)};
        CHECK(gene_encode(random_matrix(4, 5, rng), Matrix::Identity(4, 4), p) == Matrix::Zero(4, 2));
    }
    SUBCASE("duplicated linked genes get identical rows") {
        const GeneEncoder p{random_matrix(5, 3, rng), random_matrix(3, 2, rng)};
        Matrix xt = random_matrix(4, 5, rng, 0, 2);
        xt.row(3) = xt.row(1);
        UndirectedGraph g(4);
        g.add_edge(1, 3);
        g.add_edge(0, 2);
        const Matrix u = gene_encode(xt, normalize_adjacency(g), p);
        CHECK((u.row(1) - u.row(3)).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("gradient of sum(U) w.r.t. gene weights") {
        const Matrix xt = random_matrix(6, 4, rng, 0, 2);
        UndirectedGraph g(6);
        for (Index i = 0; i + 1 < 6; ++i) g.add_edge(i, i + 1);
        const Matrix g_hat = normalize_adjacency(g);
        ad::ScalarFn f = [&](ad::Tape& t, std::span<const ad::Var> p) {
            return ad::sum(gcn_forward(t.constant(xt), t.constant(g_hat), p[0], p[1]));
        };
        const auto r = ad::grad_check(f, {random_matrix(4, 3, rng), random_matrix(3, 2, rng)}, 1e-5);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("refine") {
    SUBCASE("zero bridge") {
        std::mt19937_64 rng(5);
        const Refined r = refine(random_matrix(3, 2, rng), Matrix::Zero(2, 4), random_matrix(4, 2, rng));
        CHECK(r.z == Matrix::Zero(3, 2));
        CHECK(r.association == Matrix::Zero(3, 4));
    }
    SUBCASE("hand arithmetic") {
        Matrix e(1, 1), w(1, 2), u(2, 1);
        e << 2;
        w << 1, 3;
        u << 1, 1;
        const Refined r = refine(e, w, u);
        Matrix assoc(1, 2);
        assoc << 2, 6;
        CHECK(r.association == assoc);
        CHECK(r.z == Matrix::Constant(1, 1, 8.0));
    }
    SUBCASE("bilinearity and association recovery") {
        std::mt19937_64 rng(6);
        const Matrix e = random_matrix(4, 3, rng), w = random_matrix(3, 5, rng), u = random_matrix(5, 2, rng);
        const Refined r = refine(e, w, u);
        CHECK((refine(2.5 * e, w, u).z - 2.5 * r.z).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((refine(e, w, -1.5 * u).z + 1.5 * r.z).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((r.association * u - r.z).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("initialization") {
    ModelConfig cfg;
    cfg.n_cells = 30;
    cfg.n_genes = 20;
    cfg.hidden = 16;
    cfg.latent = 8;
    cfg.gene_hidden = 6;
    cfg.clusters = 3;
    const ModelParams p = init_params(cfg, 7);
    CHECK(p == init_params(cfg, 7));
    CHECK_FALSE(p == init_params(cfg, 8));

    const double bound = std::sqrt(6.0 / (20 + 16));
    CHECK(p.encoders.view_m.w1.cwiseAbs().maxCoeff() <= bound);
    CHECK(p.encoders.view_m.b1 == Matrix::Zero(1, 16));
    CHECK(p.encoders.view_g.b1.size() == 0);
    CHECK(p.encoders.gene.w1.rows() == 30);
    CHECK(p.encoders.gene.w2.cols() == 3);
    CHECK(p.refinement.w.rows() == 8);
    CHECK(p.refinement.w.cols() == 20);
    CHECK(p.refinement.w.cwiseAbs().maxCoeff() <= 1e-2);

    cfg.refine = false;
    const ModelParams q = init_params(cfg, 7);
    CHECK(q.refinement.w.size() == 0);
    CHECK(q.refinement.projection.rows() == 8);
    CHECK(q.refinement.projection.cols() == 3);

    cfg.clusters = 1;
    CHECK_THROWS_AS(init_params(cfg, 0), ConfigError);
}

TEST_CASE("tape forward agrees with matrix-level embed") {
    for (const char* abl : {"none", "no_refine", "mlp_only", "gcn_only"}) {
        const TinyProblem p = tiny_problem(11, 6, 8, 2, parse_ablation(abl));
        ad::Tape tape;
        const ParamVars pv = bind(tape, p.params, false);
        const ForwardVars f = forward(tape, pv, p.params.config, p.inputs);
        const auto [emb, refined] = embed(p.params, p.inputs);
        INFO(abl);
        CHECK((f.e_m.value() - emb.e_m).cwiseAbs().maxCoeff() == 0.0);
        CHECK((f.e_g.value() - emb.e_g).cwiseAbs().maxCoeff() == 0.0);
        CHECK((f.z_m.value() - refined.z_m).cwiseAbs().maxCoeff() == 0.0);
        CHECK((f.z_g.value() - refined.z_g).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("checkpoint round trip is bitwise") {
    TempDir dir("model");
    for (const char* abl : {"none", "no_refine", "gcn_only"}) {
        const TinyProblem p = tiny_problem(12, 6, 8, 2, parse_ablation(abl));
        const auto path = dir / (std::string(abl) + ".ckpt");
        save_checkpoint(path, p.params, R"({"seed":12})");
        const Checkpoint back = load_checkpoint(path);
        CHECK(back.params == p.params);
        CHECK(back.train_config_json == R"({"seed":12})");
        CHECK(read_file(path).substr(0, 6) == "SCRCL1");
    }
    write_file(dir / "bad.ckpt", "NOTACHECKPOINT");
    CHECK_THROWS(load_checkpoint(dir / "bad.ckpt"));
}
