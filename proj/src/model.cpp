#include "scrcl/model.hpp"

#include "scrcl/error.hpp"

#include "json.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace scrcl {

using nlohmann::json;

std::string to_string(EncoderKind kind) { return kind == EncoderKind::Mlp ? "mlp" : "gcn"; }

namespace {

EncoderKind encoder_kind_from(const std::string& s) {
    if (s == "mlp") return EncoderKind::Mlp;
    if (s == "gcn") return EncoderKind::Gcn;
    throw ParseError("unknown encoder kind '" + s + "'");
}

Matrix glorot(Index fan_in, Index fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(fan_in, fan_out);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

ViewEncoder init_view(EncoderKind kind, const ModelConfig& cfg, std::mt19937_64& rng) {
    ViewEncoder v;
    v.kind = kind;
    v.w1 = glorot(cfg.n_genes, cfg.hidden, rng);
    v.w2 = glorot(cfg.hidden, cfg.latent, rng);
    if (kind == EncoderKind::Mlp) {
        v.b1 = Matrix::Zero(1, cfg.hidden);
        v.b2 = Matrix::Zero(1, cfg.latent);
    }
    return v;
}

}  // namespace

void validate(const ModelConfig& cfg) {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (cfg.n_cells < 2 || cfg.n_genes < 2) fail("need at least 2 cells and 2 genes");
    if (cfg.hidden < 1 || cfg.latent < 1 || cfg.gene_hidden < 1) fail("layer widths must be >= 1");
    if (cfg.clusters < 2) fail("clusters must be >= 2");
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::named() {
    std::vector<std::pair<std::string, Matrix*>> out;
    auto view = [&](const std::string& prefix, ViewEncoder& v) {
        out.emplace_back(prefix + ".w1", &v.w1);
        if (v.kind == EncoderKind::Mlp) out.emplace_back(prefix + ".b1", &v.b1);
        out.emplace_back(prefix + ".w2", &v.w2);
        if (v.kind == EncoderKind::Mlp) out.emplace_back(prefix + ".b2", &v.b2);
    };
    view("view_m", encoders.view_m);
    view("view_g", encoders.view_g);
    if (config.refine) {
        out.emplace_back("gene.w1", &encoders.gene.w1);
        out.emplace_back("gene.w2", &encoders.gene.w2);
        out.emplace_back("refine.w", &refinement.w);
    } else {
        out.emplace_back("refine.projection", &refinement.projection);
    }
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::named() const {
    auto mut = const_cast<ModelParams*>(this)->named();
    return {mut.begin(), mut.end()};
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.config = cfg;
    p.encoders.view_m = init_view(cfg.view_m, cfg, rng);
    p.encoders.view_g = init_view(cfg.view_g, cfg, rng);
    if (cfg.refine) {
        p.encoders.gene.w1 = glorot(cfg.n_cells, cfg.gene_hidden, rng);
        p.encoders.gene.w2 = glorot(cfg.gene_hidden, cfg.clusters, rng);
        std::uniform_real_distribution<double> small(-1e-2, 1e-2);
        p.refinement.w.resize(cfg.latent, cfg.n_genes);
        for (Index i = 0; i < p.refinement.w.size(); ++i) p.refinement.w.data()[i] = small(rng);
    } else {
        p.refinement.projection = glorot(cfg.latent, cfg.clusters, rng);
    }
    return p;
}

ad::Var mlp_forward(ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
    ad::Var h = ad::relu(ad::add_row_broadcast(ad::matmul(x, w1), b1));
    return ad::add_row_broadcast(ad::matmul(h, w2), b2);
}

ad::Var gcn_forward(ad::Var x, ad::Var a_hat, ad::Var w1, ad::Var w2) {
    // (A X) W1 and A (H W2) keep the N x N products on the narrower side.
    ad::Var h = ad::relu(ad::matmul(ad::matmul(a_hat, x), w1));
    return ad::matmul(a_hat, ad::matmul(h, w2));
}

RefineVars refine(ad::Var e, ad::Var w, ad::Var u) {
    ad::Var assoc = ad::matmul(e, w);
    return {assoc, ad::matmul(assoc, u)};
}

namespace {

template <class Leaf>
ParamVars bind_with(const ModelParams& params, Leaf&& make) {
    ParamVars pv;
    auto leaf = [&](const Matrix& m) {
        ad::Var v = make(m);
        pv.leaves.push_back(v);
        return v;
    };
    auto view = [&](const ViewEncoder& e, ad::Var& w1, ad::Var& b1, ad::Var& w2, ad::Var& b2) {
        w1 = leaf(e.w1);
        if (e.kind == EncoderKind::Mlp) b1 = leaf(e.b1);
        w2 = leaf(e.w2);
        if (e.kind == EncoderKind::Mlp) b2 = leaf(e.b2);
    };
    view(params.encoders.view_m, pv.m_w1, pv.m_b1, pv.m_w2, pv.m_b2);
    view(params.encoders.view_g, pv.g_w1, pv.g_b1, pv.g_w2, pv.g_b2);
    if (params.config.refine) {
        pv.gene_w1 = leaf(params.encoders.gene.w1);
        pv.gene_w2 = leaf(params.encoders.gene.w2);
        pv.w = leaf(params.refinement.w);
    } else {
        pv.projection = leaf(params.refinement.projection);
    }
    return pv;
}

}  // namespace

ParamVars bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
    return bind_with(params, [&](const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); });
}

ParamVars bind(const ModelParams& params, std::span<const ad::Var> leaves) {
    const std::size_t expected = params.named().size();
    if (leaves.size() != expected) {
        throw ParameterError("bind: expected " + std::to_string(expected) + " leaves, got " +
                             std::to_string(leaves.size()));
    }
    std::size_t next = 0;
    ParamVars pv = bind_with(params, [&](const Matrix&) { return leaves[next++]; });
    for (std::size_t i = 0; i < expected; ++i) {
        const Matrix& want = *params.named()[i].second;
        const Matrix& got = leaves[i].value();
        if (got.rows() != want.rows() || got.cols() != want.cols()) {
            throw DimensionError("bind: leaf " + params.named()[i].first + " is " + shape_string(got) +
                                 ", expected " + shape_string(want));
        }
    }
    return pv;
}

ForwardVars forward(ad::Tape& tape, const ParamVars& p, const ModelConfig& cfg, const ModelInputs& in) {
    ad::Var x = tape.constant(in.x);
    ad::Var a_hat = tape.constant(in.a_hat);
    auto encode = [&](EncoderKind kind, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
        return kind == EncoderKind::Mlp ? mlp_forward(x, w1, b1, w2, b2) : gcn_forward(x, a_hat, w1, w2);
    };
    ForwardVars f;
    f.e_m = encode(cfg.view_m, p.m_w1, p.m_b1, p.m_w2, p.m_b2);
    f.e_g = encode(cfg.view_g, p.g_w1, p.g_b1, p.g_w2, p.g_b2);
    if (cfg.refine) {
        ad::Var xt = tape.constant(in.x.transpose());
        ad::Var g_hat = tape.constant(in.g_hat);
        f.u = gcn_forward(xt, g_hat, p.gene_w1, p.gene_w2);
        f.z_m = refine(f.e_m, p.w, f.u).z;
        f.z_g = refine(f.e_g, p.w, f.u).z;
    } else {
        f.z_m = ad::matmul(f.e_m, p.projection);
        f.z_g = ad::matmul(f.e_g, p.projection);
    }
    return f;
}

Matrix mlp_forward(const Matrix& x, const ViewEncoder& p) {
    if (x.cols() != p.w1.rows()) {
        throw DimensionError("mlp_forward: input " + shape_string(x) + " vs first layer " + shape_string(p.w1));
    }
    ad::Tape t;
    return mlp_forward(t.constant(x), t.constant(p.w1), t.constant(p.b1), t.constant(p.w2), t.constant(p.b2))
        .value();
}

Matrix gcn_forward(const Matrix& x, const Matrix& a_hat, const ViewEncoder& p) {
    if (a_hat.rows() != x.rows() || a_hat.cols() != x.rows()) {
        throw DimensionError("gcn_forward: adjacency " + shape_string(a_hat) + " vs input " + shape_string(x));
    }
    ad::Tape t;
    return gcn_forward(t.constant(x), t.constant(a_hat), t.constant(p.w1), t.constant(p.w2)).value();
}

Matrix gene_encode(const Matrix& xt, const Matrix& g_hat, const GeneEncoder& p) {
    if (g_hat.rows() != xt.rows() || g_hat.cols() != xt.rows()) {
        throw DimensionError("gene_encode: adjacency " + shape_string(g_hat) + " vs input " + shape_string(xt));
    }
    ad::Tape t;
    return gcn_forward(t.constant(xt), t.constant(g_hat), t.constant(p.w1), t.constant(p.w2)).value();
}

Refined refine(const Matrix& e, const Matrix& w, const Matrix& u) {
    ad::Tape t;
    auto r = refine(t.constant(e), t.constant(w), t.constant(u));
    return {r.association.value(), r.z.value()};
}

std::pair<EmbeddingPair, RefinedEmbeddings> embed(const ModelParams& params, const ModelInputs& in) {
    ad::Tape t;
    ParamVars pv = bind(t, params, false);
    ForwardVars f = forward(t, pv, params.config, in);
    EmbeddingPair e{f.e_m.value(), f.e_g.value()};
    RefinedEmbeddings z{f.z_m.value(), f.z_g.value(), f.u.valid() ? f.u.value() : Matrix()};
    return {std::move(e), std::move(z)};
}

std::string model_config_json(const ModelConfig& cfg) {
    json j = {{"n_cells", cfg.n_cells},     {"n_genes", cfg.n_genes},
              {"hidden", cfg.hidden},       {"latent", cfg.latent},
              {"gene_hidden", cfg.gene_hidden}, {"clusters", cfg.clusters},
              {"view_m", to_string(cfg.view_m)}, {"view_g", to_string(cfg.view_g)},
              {"refine", cfg.refine}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelConfig cfg;
    cfg.n_cells = j.at("n_cells").get<Index>();
    cfg.n_genes = j.at("n_genes").get<Index>();
    cfg.hidden = j.at("hidden").get<Index>();
    cfg.latent = j.at("latent").get<Index>();
    cfg.gene_hidden = j.at("gene_hidden").get<Index>();
    cfg.clusters = j.at("clusters").get<Index>();
    cfg.view_m = encoder_kind_from(j.at("view_m").get<std::string>());
    cfg.view_g = encoder_kind_from(j.at("view_g").get<std::string>());
    cfg.refine = j.at("refine").get<bool>();
    return cfg;
}

namespace {

constexpr std::array<char, 6> kMagic{'S', 'C', 'R', 'C', 'L', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 8> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw ParseError(path.string() + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64(std::istream& in, const std::filesystem::path& path) {
    return std::bit_cast<double>(get_u64(in, path));
}

std::string get_bytes(std::istream& in, std::uint64_t n, const std::filesystem::path& path) {
    if (n > (1ull << 32)) throw ParseError(path.string() + ": implausible block length");
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw ParseError(path.string() + ": truncated checkpoint");
    }
    return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& train_config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    json header = {{"model", json::parse(model_config_json(params.config))},
                   {"train", json::parse(train_config_json)}};
    const std::string text = header.dump();
    out.write(kMagic.data(), kMagic.size());
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto blocks = params.named();
    put_u64(out, blocks.size());
    for (const auto& [name, m] : blocks) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, static_cast<std::uint64_t>(m->rows()));
        put_u64(out, static_cast<std::uint64_t>(m->cols()));
        for (Index i = 0; i < m->size(); ++i) put_f64(out, m->data()[i]);
    }
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open for reading");
    std::array<char, 6> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw ParseError(path.string() + ": not an SCRCL1 checkpoint");
    }
    const json header = json::parse(get_bytes(in, get_u64(in, path), path));
    Checkpoint ck;
    ModelParams& p = ck.params;
    p.config = model_config_from_json(header.at("model").dump());
    ck.train_config_json = header.contains("train") ? header.at("train").dump() : "{}";
    p.encoders.view_m.kind = p.config.view_m;
    p.encoders.view_g.kind = p.config.view_g;

    auto slots = p.named();
    const std::uint64_t n_blocks = get_u64(in, path);
    if (n_blocks != slots.size()) {
        throw ParseError(path.string() + ": expected " + std::to_string(slots.size()) + " parameter blocks, found " +
                         std::to_string(n_blocks));
    }
    for (auto& [name, m] : slots) {
        const std::string stored = get_bytes(in, get_u64(in, path), path);
        if (stored != name) throw ParseError(path.string() + ": expected block '" + name + "', found '" + stored + "'");
        const auto rows = static_cast<Index>(get_u64(in, path));
        const auto cols = static_cast<Index>(get_u64(in, path));
        m->resize(rows, cols);
        for (Index i = 0; i < m->size(); ++i) m->data()[i] = get_f64(in, path);
    }
    return ck;
}

}  // namespace scrcl
