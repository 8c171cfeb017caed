#include "scrcl/trainer.hpp"

#include "scrcl/error.hpp"
#include "text_io.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace scrcl {

AblationSet parse_ablation(const std::string& list) {
    AblationSet a;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto flag = std::string(detail::trim(item));
        if (flag.empty() || flag == "none") continue;
        if (flag == "no_hea") a.no_hea = true;
        else if (flag == "no_ndc") a.no_ndc = true;
        else if (flag == "no_cvc") a.no_cvc = true;
        else if (flag == "mlp_only") a.mlp_only = true;
        else if (flag == "gcn_only") a.gcn_only = true;
        else if (flag == "no_refine") a.no_refine = true;
        else throw ConfigError("unknown ablation flag '" + flag + "'");
    }
    return a;
}

std::string to_string(const AblationSet& a) {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ',';
        out += name;
    };
    add(a.no_hea, "no_hea");
    add(a.no_ndc, "no_ndc");
    add(a.no_cvc, "no_cvc");
    add(a.mlp_only, "mlp_only");
    add(a.gcn_only, "gcn_only");
    add(a.no_refine, "no_refine");
    return out.empty() ? "none" : out;
}

void validate(const TrainConfig& cfg) {
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (cfg.epochs < 1) fail("epochs must be >= 1");
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) fail("lr must be a finite value >= 0");
    if (cfg.clusters < 2) fail("clusters must be >= 2");
    if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) fail("alpha and beta must be >= 0");
    if (cfg.latent < 1 || cfg.hidden < 1 || cfg.gene_hidden < 1) fail("layer widths must be >= 1");
    if (cfg.k_cell < 1 || cfg.k_gene < 1) fail("k_cell and k_gene must be >= 1");
}

EffectiveSetup apply_ablation(const TrainConfig& cfg, Index n_cells, Index n_genes) {
    const AblationSet& a = cfg.ablation;
    if (a.mlp_only && a.gcn_only) throw ConfigError("ablation: mlp_only and gcn_only are contradictory");
    if (a.no_hea && a.no_ndc && a.no_cvc) throw ConfigError("ablation: every loss term removed, nothing to optimize");
    EffectiveSetup s;
    s.gamma = a.no_hea ? 0.0 : 1.0;
    s.alpha = a.no_ndc ? 0.0 : cfg.alpha;
    s.beta = a.no_cvc ? 0.0 : cfg.beta;
    ModelConfig& m = s.model;
    m.n_cells = n_cells;
    m.n_genes = n_genes;
    m.hidden = cfg.hidden;
    m.latent = cfg.latent;
    m.gene_hidden = cfg.gene_hidden;
    m.clusters = cfg.clusters;
    m.view_m = a.gcn_only ? EncoderKind::Gcn : EncoderKind::Mlp;
    m.view_g = a.mlp_only ? EncoderKind::Mlp : EncoderKind::Gcn;
    m.refine = !a.no_refine;
    return s;
}

ModelInputs make_inputs(const ExpressionMatrix& x, const CellGraph& cells, const GeneGraph& genes) {
    if (cells.size() != x.n_cells()) {
        throw DimensionError("cell graph has " + std::to_string(cells.size()) + " nodes for " +
                             std::to_string(x.n_cells()) + " cells");
    }
    if (genes.size() != x.n_genes()) {
        throw DimensionError("gene graph has " + std::to_string(genes.size()) + " nodes for " +
                             std::to_string(x.n_genes()) + " genes");
    }
    return {x.values(), normalize_adjacency(cells), normalize_adjacency(genes)};
}

Objective build_objective(ad::Tape& tape, const ParamVars& pv, const ModelConfig& model, const ModelInputs& in,
                          const GraphMasks& masks, const EffectiveSetup& setup) {
    Objective o;
    o.forward = forward(tape, pv, model, in);
    o.hea = losses::hea(o.forward.e_m, o.forward.e_g);
    o.ndc = losses::ndc(losses::kappa(o.forward.e_m, o.forward.e_g), masks);
    o.cvc = losses::cvc(losses::similarity(o.forward.z_m, o.forward.z_g), masks);

    ad::Var total;
    auto add_term = [&](ad::Var term, double weight) {
        if (weight == 0.0) return;
        ad::Var weighted = weight == 1.0 ? term : ad::scale(term, weight);
        total = total.valid() ? ad::add(total, weighted) : weighted;
    };
    add_term(o.hea, setup.gamma);
    add_term(o.ndc, setup.alpha);
    add_term(o.cvc, setup.beta);
    if (!total.valid()) total = ad::scale(o.hea, 0.0);
    o.total = total;
    return o;
}

namespace {

LossBreakdown breakdown_of(const Objective& o, const EffectiveSetup& s) {
    LossBreakdown b = total_loss(o.hea.scalar(), o.ndc.scalar(), o.cvc.scalar(), s.alpha, s.beta, s.gamma);
    b.total = o.total.scalar();
    return b;
}

/// The gene encoder and the refinement bridge may only influence the
/// reconstruction term.
void check_gradient_routing(const ad::Tape& tape, const Objective& o, const ParamVars& pv) {
    for (ad::Var leaf : {pv.gene_w1, pv.gene_w2, pv.w}) {
        if (!leaf.valid()) continue;
        if (tape.depends_on(o.hea, leaf) || tape.depends_on(o.ndc, leaf)) {
            throw std::logic_error("gradient routing violated: gene encoder or refinement weights reach hea/ndc");
        }
    }
}

class Adam {
  public:
    Adam(const std::vector<std::pair<std::string, Matrix*>>& params, double lr) : lr_(lr) {
        for (const auto& [name, m] : params) {
            m_.push_back(Matrix::Zero(m->rows(), m->cols()));
            v_.push_back(Matrix::Zero(m->rows(), m->cols()));
        }
    }

    void step(const std::vector<std::pair<std::string, Matrix*>>& params, const std::vector<Matrix>& grads) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i].cwiseAbs2();
            Matrix& p = *params[i].second;
            p.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + kEps);
        }
    }

  private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    double lr_;
    int t_ = 0;
    std::vector<Matrix> m_, v_;
};

}  // namespace

LossBreakdown evaluate_loss(const ModelParams& params, const ModelInputs& in, const GraphMasks& masks,
                            const EffectiveSetup& setup) {
    ad::Tape tape;
    ParamVars pv = bind(tape, params, false);
    return breakdown_of(build_objective(tape, pv, params.config, in, masks, setup), setup);
}

TrainReport train(const ExpressionMatrix& x, const CellGraph& cell_graph, const GeneGraph& gene_graph,
                  const TrainConfig& cfg) {
    validate(cfg);
    const auto start = std::chrono::steady_clock::now();
    const EffectiveSetup setup = apply_ablation(cfg, x.n_cells(), x.n_genes());
    const ModelInputs inputs = make_inputs(x, cell_graph, gene_graph);
    const GraphMasks masks = make_masks(cell_graph);

    TrainReport report;
    report.final_params = init_params(setup.model, cfg.seed);
    ModelParams& params = report.final_params;
    auto slots = params.named();
    Adam adam(slots, cfg.lr);
    report.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ad::Tape tape;
        ParamVars pv = bind(tape, params, true);
        Objective o = build_objective(tape, pv, setup.model, inputs, masks, setup);
        if (epoch == 0) check_gradient_routing(tape, o, pv);

        LossBreakdown b = breakdown_of(o, setup);
        if (!std::isfinite(b.total) || !std::isfinite(b.hea) || !std::isfinite(b.ndc) || !std::isfinite(b.cvc)) {
            std::ostringstream msg;
            msg << "epoch " << epoch + 1 << ": non-finite loss (hea=" << b.hea << ", ndc=" << b.ndc
                << ", cvc=" << b.cvc << ", total=" << b.total << ")";
            throw NumericError(msg.str());
        }
        report.loss_trace.push_back(b);

        tape.backward(o.total);
        std::vector<Matrix> grads;
        grads.reserve(pv.leaves.size());
        for (ad::Var leaf : pv.leaves) grads.push_back(tape.gradient(leaf));
        adam.step(slots, grads);
    }

    auto [emb, refined] = embed(params, inputs);
    for (const auto& [name, m] : params.named()) {
        if (!m->allFinite()) throw NumericError("training produced non-finite values in " + name);
    }
    report.embeddings = std::move(emb);
    report.refined = std::move(refined);
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossBreakdown>& trace) {
    auto out = detail::open_out(path);
    out << "epoch,hea,ndc,cvc,total\n";
    for (std::size_t e = 0; e < trace.size(); ++e) {
        const auto& b = trace[e];
        out << e + 1 << ',' << detail::format_double(b.hea) << ',' << detail::format_double(b.ndc) << ','
            << detail::format_double(b.cvc) << ',' << detail::format_double(b.total) << '\n';
    }
}

}  // namespace scrcl
