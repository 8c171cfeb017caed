#include "scrcl/autodiff.hpp"

#include "scrcl/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace scrcl {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
    }
    return a * b;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
        const double top = m.row(i).maxCoeff();
        out.row(i) = (m.row(i).array() - top).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

Matrix softmax_cols(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
        const double top = m.col(j).maxCoeff();
        out.col(j) = (m.col(j).array() - top).exp();
        out.col(j) /= out.col(j).sum();
    }
    return out;
}

}  // namespace scrcl

namespace scrcl::ad {

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                             shape_string(b));
    }
}

Tape& same_tape(const char* op, Var a, Var b) {
    if (!a.valid() || a.tape() != b.tape()) {
        throw ParameterError(std::string(op) + ": operands live on different tapes");
    }
    return *a.tape();
}

Matrix log_eps(const Matrix& p) { return (p.array() + kLogEps).log().matrix(); }

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) {
        throw ParameterError("scalar(): node is " + shape_string(v) + ", expected 1x1");
    }
    return v(0, 0);
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](std::size_t p) { return nodes_[p].requires_grad; });
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Matrix& contribution) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
        n.grad = contribution;
        n.has_grad = true;
    } else {
        n.grad += contribution;
    }
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw ParameterError("backward: root belongs to another tape");
    const Matrix& rv = nodes_[root.id()].value;
    if (rv.rows() != 1 || rv.cols() != 1) {
        throw ParameterError("backward: root must be 1x1, got " + shape_string(rv));
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad.resize(0, 0);
    }
    accumulate(root.id(), Matrix::Ones(1, 1));
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, id, n.grad);
    }
}

Matrix Tape::gradient(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.has_grad) return n.grad;
    return Matrix::Zero(n.value.rows(), n.value.cols());
}

bool Tape::depends_on(Var output, Var input) const {
    if (input.id() > output.id()) return false;
    std::vector<char> seen(output.id() + 1, 0);
    std::vector<std::size_t> stack{output.id()};
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        if (id == input.id()) return true;
        if (seen[id]) continue;
        seen[id] = 1;
        for (std::size_t p : nodes_[id].parents) {
            if (p >= input.id()) stack.push_back(p);
        }
    }
    return false;
}

Var matmul(Var a, Var b) {
    Tape& t = same_tape("matmul", a, b);
    Matrix out = scrcl::matmul(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
        if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
    });
}

Var transpose(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(a.value().transpose(), {ia},
                            [ia](Tape& tp, std::size_t, const Matrix& g) {
                                tp.accumulate(ia, g.transpose());
                            });
}

Var add(Var a, Var b) {
    Tape& t = same_tape("add", a, b);
    require_same_shape("add", a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(a.value() + b.value(), {ia, ib},
                    [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
                        tp.accumulate(ia, g);
                        tp.accumulate(ib, g);
                    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape("sub", a, b);
    require_same_shape("sub", a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(a.value() - b.value(), {ia, ib},
                    [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
                        tp.accumulate(ia, g);
                        if (tp.requires_grad(ib)) tp.accumulate(ib, -g);
                    });
}

Var hadamard(Var a, Var b) {
    Tape& t = same_tape("hadamard", a, b);
    require_same_shape("hadamard", a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    Matrix out = a.value().cwiseProduct(b.value());
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
        if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
    });
}

Var divide(Var a, Var b) {
    Tape& t = same_tape("divide", a, b);
    require_same_shape("divide", a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    Matrix out = a.value().cwiseQuotient(b.value());
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self, const Matrix& g) {
        const Matrix& bv = tp.value(ib);
        if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseQuotient(bv));
        if (tp.requires_grad(ib)) {
            // d(a/b)/db = -(a/b)/b
            tp.accumulate(ib, -g.cwiseProduct(tp.value(self)).cwiseQuotient(bv));
        }
    });
}

Var scale(Var a, double factor) {
    const std::size_t ia = a.id();
    return a.tape()->record(a.value() * factor, {ia},
                            [ia, factor](Tape& tp, std::size_t, const Matrix& g) {
                                tp.accumulate(ia, g * factor);
                            });
}

Var add_scalar(Var a, double offset) {
    const std::size_t ia = a.id();
    Matrix out = (a.value().array() + offset).matrix();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t, const Matrix& g) {
        tp.accumulate(ia, g);
    });
}

Var add_row_broadcast(Var a, Var row) {
    Tape& t = same_tape("add_row_broadcast", a, row);
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw DimensionError("add_row_broadcast: row " + shape_string(row.value()) +
                             " does not fit " + shape_string(a.value()));
    }
    const std::size_t ia = a.id(), ir = row.id();
    Matrix out = a.value().rowwise() + row.value().row(0);
    return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, std::size_t, const Matrix& g) {
        tp.accumulate(ia, g);
        if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
    });
}

Var relu(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(a.value().cwiseMax(0.0), {ia},
                            [ia](Tape& tp, std::size_t, const Matrix& g) {
                                const Matrix& x = tp.value(ia);
                                tp.accumulate(ia, (x.array() > 0.0).select(g, 0.0).matrix());
                            });
}

Var square(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(a.value().cwiseAbs2(), {ia},
                            [ia](Tape& tp, std::size_t, const Matrix& g) {
                                tp.accumulate(ia, 2.0 * g.cwiseProduct(tp.value(ia)));
                            });
}

Var softmax_rows(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(scrcl::softmax_rows(a.value()), {ia},
                            [ia](Tape& tp, std::size_t self, const Matrix& g) {
                                const Matrix& y = tp.value(self);
                                Vector dots = g.cwiseProduct(y).rowwise().sum();
                                Matrix gx = (g.colwise() - dots).cwiseProduct(y);
                                tp.accumulate(ia, gx);
                            });
}

Var softmax_cols(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(scrcl::softmax_cols(a.value()), {ia},
                            [ia](Tape& tp, std::size_t self, const Matrix& g) {
                                const Matrix& y = tp.value(self);
                                Eigen::RowVectorXd dots = g.cwiseProduct(y).colwise().sum();
                                Matrix gx = (g.rowwise() - dots).cwiseProduct(y);
                                tp.accumulate(ia, gx);
                            });
}

Var sum(Var a) {
    const std::size_t ia = a.id();
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    const Index r = a.rows(), c = a.cols();
    return a.tape()->record(std::move(out), {ia},
                            [ia, r, c](Tape& tp, std::size_t, const Matrix& g) {
                                tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                            });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
    const std::size_t ia = a.id();
    Matrix out = a.value().rowwise().sum();
    const Index c = a.cols();
    return a.tape()->record(std::move(out), {ia}, [ia, c](Tape& tp, std::size_t, const Matrix& g) {
        tp.accumulate(ia, g.replicate(1, c));
    });
}

Var row_normalize(Var a, double floor) {
    const std::size_t ia = a.id();
    const Matrix& x = a.value();
    Vector norms = x.rowwise().norm();
    Vector denom = norms.cwiseMax(floor);
    Matrix out = x.array().colwise() / denom.array();
    return a.tape()->record(
        std::move(out), {ia},
        [ia, norms, denom, floor](Tape& tp, std::size_t self, const Matrix& g) {
            const Matrix& y = tp.value(self);
            Matrix gx(g.rows(), g.cols());
            for (Index i = 0; i < g.rows(); ++i) {
                if (norms(i) > floor) {
                    const double proj = g.row(i).dot(y.row(i));
                    gx.row(i) = (g.row(i) - proj * y.row(i)) / denom(i);
                } else {
                    gx.row(i) = g.row(i) / floor;
                }
            }
            tp.accumulate(ia, gx);
        });
}

Var concat_cols(Var a, Var b) {
    Tape& t = same_tape("concat_cols", a, b);
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols: row mismatch " + shape_string(a.value()) + " vs " +
                             shape_string(b.value()));
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const std::size_t ia = a.id(), ib = b.id();
    const Index ca = a.cols(), cb = b.cols();
    return t.record(std::move(out), {ia, ib}, [=](Tape& tp, std::size_t, const Matrix& g) {
        tp.accumulate(ia, g.leftCols(ca));
        tp.accumulate(ib, g.rightCols(cb));
    });
}

// SKL(p, q) = sum_k (p_k - q_k) (log(p_k + eps) - log(q_k + eps)). Every
// term is non-negative, so both primitives below are >= 0 entrywise and
// exactly 0 for identical rows.

Var skl_rows(Var p, Var q) {
    Tape& t = same_tape("skl_rows", p, q);
    require_same_shape("skl_rows", p.value(), q.value());
    const Matrix& pv = p.value();
    const Matrix& qv = q.value();
    Matrix lp = log_eps(pv);
    Matrix lq = log_eps(qv);
    Matrix out = (pv - qv).cwiseProduct(lp - lq).rowwise().sum();
    const std::size_t ip = p.id(), iq = q.id();
    return t.record(std::move(out), {ip, iq},
                    [ip, iq, lp = std::move(lp), lq = std::move(lq)](Tape& tp, std::size_t,
                                                                     const Matrix& g) {
                        const Matrix& pv = tp.value(ip);
                        const Matrix& qv = tp.value(iq);
                        const Matrix diff = pv - qv;
                        const Matrix ldiff = lp - lq;
                        if (tp.requires_grad(ip)) {
                            Matrix gp = ldiff + diff.cwiseQuotient((pv.array() + kLogEps).matrix());
                            tp.accumulate(ip, gp.array().colwise() * g.col(0).array());
                        }
                        if (tp.requires_grad(iq)) {
                            Matrix gq = -ldiff - diff.cwiseQuotient((qv.array() + kLogEps).matrix());
                            tp.accumulate(iq, gq.array().colwise() * g.col(0).array());
                        }
                    });
}

Var skl_pairwise(Var p, Var q) {
    Tape& t = same_tape("skl_pairwise", p, q);
    const Matrix& pv = p.value();
    const Matrix& qv = q.value();
    if (pv.cols() != qv.cols()) {
        throw DimensionError("skl_pairwise: distribution length mismatch " + shape_string(pv) +
                             " vs " + shape_string(qv));
    }
    Matrix lp = log_eps(pv);
    Matrix lq = log_eps(qv);
    const Index n = pv.rows(), m = qv.rows(), d = pv.cols();
    Matrix out(n, m);
    for (Index i = 0; i < n; ++i) {
        const double* pi = pv.row(i).data();
        const double* lpi = lp.row(i).data();
        for (Index j = 0; j < m; ++j) {
            const double* qj = qv.row(j).data();
            const double* lqj = lq.row(j).data();
            double acc = 0.0;
            for (Index k = 0; k < d; ++k) acc += (pi[k] - qj[k]) * (lpi[k] - lqj[k]);
            out(i, j) = acc;
        }
    }
    const std::size_t ip = p.id(), iq = q.id();
    return t.record(
        std::move(out), {ip, iq},
        [ip, iq, lp = std::move(lp), lq = std::move(lq)](Tape& tp, std::size_t, const Matrix& g) {
            const Matrix& pv = tp.value(ip);
            const Matrix& qv = tp.value(iq);
            if (tp.requires_grad(ip)) {
                const Vector r = g.rowwise().sum();
                const Matrix pe = (pv.array() + kLogEps).matrix();
                Matrix gp = (lp + pv.cwiseQuotient(pe)).array().colwise() * r.array();
                gp -= g * lq;
                gp -= (g * qv).cwiseQuotient(pe);
                tp.accumulate(ip, gp);
            }
            if (tp.requires_grad(iq)) {
                const Vector c = g.colwise().sum().transpose();
                const Matrix qe = (qv.array() + kLogEps).matrix();
                Matrix gq = (lq + qv.cwiseQuotient(qe)).array().colwise() * c.array();
                gq -= g.transpose() * lp;
                gq -= (g.transpose() * pv).cwiseQuotient(qe);
                tp.accumulate(iq, gq);
            }
        });
}

GradCheckResult grad_check(const ScalarFn& f, std::vector<Matrix> params, double step) {
    if (!(step > 0.0)) throw ParameterError("grad_check: step must be > 0");

    std::vector<Matrix> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (const Matrix& p : params) leaves.push_back(tape.variable(p));
        Var out = f(tape, leaves);
        tape.backward(out);
        for (Var v : leaves) analytic.push_back(tape.gradient(v));
    }

    auto evaluate = [&]() {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (const Matrix& p : params) leaves.push_back(tape.constant(p));
        return f(tape, leaves).scalar();
    };

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (Index r = 0; r < params[pi].rows(); ++r) {
            for (Index c = 0; c < params[pi].cols(); ++c) {
                const double orig = params[pi](r, c);
                params[pi](r, c) = orig + step;
                const double plus = evaluate();
                params[pi](r, c) = orig - step;
                const double minus = evaluate();
                params[pi](r, c) = orig;
                if (!std::isfinite(plus) || !std::isfinite(minus)) {
                    throw NumericError("grad_check: non-finite loss perturbing parameter " +
                                       std::to_string(pi) + " entry (" + std::to_string(r) + "," +
                                       std::to_string(c) + ")");
                }
                const double numeric = (plus - minus) / (2.0 * step);
                const double err = std::abs(analytic[pi](r, c) - numeric) / (std::abs(numeric) + 1e-8);
                if (err > result.max_rel_error) result = {err, pi, r, c};
            }
        }
    }
    return result;
}

}  // namespace scrcl::ad
