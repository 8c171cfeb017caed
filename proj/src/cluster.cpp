#include "scrcl/cluster.hpp"

#include "scrcl/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <unordered_map>

namespace scrcl {

Matrix concat_embed(const Matrix& z_m, const Matrix& z_g) {
    if (z_m.rows() != z_g.rows() || z_m.cols() != z_g.cols()) {
        throw DimensionError("concat_embed: shape mismatch " + shape_string(z_m) + " vs " + shape_string(z_g));
    }
    Matrix out(z_m.rows(), z_m.cols() + z_g.cols());
    out << z_m, z_g;
    return out;
}

namespace {

double sq_dist(const Matrix& a, Index i, const Matrix& b, Index j) { return (a.row(i) - b.row(j)).squaredNorm(); }

Matrix seed_plus_plus(const Matrix& z, int k, std::mt19937_64& rng) {
    const Index n = z.rows();
    Matrix centers(k, z.cols());
    std::uniform_int_distribution<Index> pick(0, n - 1);
    centers.row(0) = z.row(pick(rng));
    Vector closest(n);
    for (Index i = 0; i < n; ++i) closest(i) = sq_dist(z, i, centers, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = closest.sum();
        Index chosen = n - 1;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            for (Index i = 0; i < n; ++i) {
                acc += closest(i);
                if (acc > target && closest(i) > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centers.row(c) = z.row(chosen);
        for (Index i = 0; i < n; ++i) closest(i) = std::min(closest(i), sq_dist(z, i, centers, c));
    }
    return centers;
}

/// Nearest-center labels; returns the summed squared distance.
double assign(const Matrix& z, const Matrix& centers, std::vector<int>& labels, Vector& dist) {
    double inertia = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < centers.rows(); ++c) {
            const double d = sq_dist(z, i, centers, c);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = best;
        dist(i) = best_d;
        inertia += best_d;
    }
    return inertia;
}

/// Moves the farthest point of a multi-member cluster into each empty one.
void repair_empty(const Matrix& z, Matrix& centers, std::vector<int>& labels, Vector& dist, int k) {
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
        if (sizes[static_cast<std::size_t>(c)] > 0) continue;
        Index far = -1;
        for (Index i = 0; i < z.rows(); ++i) {
            if (sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] < 2) continue;
            if (far < 0 || dist(i) > dist(far)) far = i;
        }
        if (far < 0) break;
        --sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
        labels[static_cast<std::size_t>(far)] = c;
        ++sizes[static_cast<std::size_t>(c)];
        centers.row(c) = z.row(far);
        dist(far) = 0.0;
    }
}

Matrix means_of(const Matrix& z, const std::vector<int>& labels, const Matrix& previous) {
    Matrix sums = Matrix::Zero(previous.rows(), z.cols());
    std::vector<Index> counts(static_cast<std::size_t>(previous.rows()), 0);
    for (Index i = 0; i < z.rows(); ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        sums.row(l) += z.row(i);
        ++counts[static_cast<std::size_t>(l)];
    }
    for (Index c = 0; c < sums.rows(); ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
            sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        } else {
            sums.row(c) = previous.row(c);
        }
    }
    return sums;
}

double inertia_of(const Matrix& z, const std::vector<int>& labels, const Matrix& centers) {
    double s = 0.0;
    for (Index i = 0; i < z.rows(); ++i) s += sq_dist(z, i, centers, labels[static_cast<std::size_t>(i)]);
    return s;
}

ClusterAssignment lloyd(const Matrix& z, int k, std::mt19937_64& rng, const KMeansOptions& opts) {
    Matrix centers = seed_plus_plus(z, k, rng);
    std::vector<int> labels(static_cast<std::size_t>(z.rows()), 0);
    Vector dist(z.rows());
    double prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const double inertia = assign(z, centers, labels, dist);
        repair_empty(z, centers, labels, dist, k);
        centers = means_of(z, labels, centers);
        if (std::isfinite(prev) && std::abs(prev - inertia) <= opts.tol * prev) break;
        prev = inertia;
    }
    ClusterAssignment out;
    out.k = k;
    out.labels = std::move(labels);
    out.inertia = inertia_of(z, out.labels, means_of(z, out.labels, centers));
    return out;
}

std::vector<int> densify(std::span<const int> labels, int& count) {
    std::unordered_map<int, int> index;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        auto [it, inserted] = index.emplace(l, static_cast<int>(index.size()));
        out.push_back(it->second);
    }
    count = static_cast<int>(index.size());
    return out;
}

void require_same_length(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw DimensionError("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " truth labels");
    }
    if (pred.empty()) throw ParameterError("metrics: empty labeling");
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

ClusterAssignment kmeans(const Matrix& z, int k, std::uint64_t seed, const KMeansOptions& opts) {
    if (k < 1) throw ParameterError("kmeans: k must be >= 1");
    if (k > z.rows()) {
        throw ParameterError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(z.rows()) + " points");
    }
    if (opts.restarts < 1) throw ParameterError("kmeans: restarts must be >= 1");
    ClusterAssignment best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opts.restarts; ++r) {
        std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(sseq);
        ClusterAssignment run = lloyd(z, k, rng, opts);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

std::vector<int> max_weight_assignment(const Matrix& weight) {
    const Index n = weight.rows();
    if (weight.cols() != n) throw DimensionError("assignment: weight matrix must be square, got " + shape_string(weight));
    // Shortest augmenting path Hungarian method on cost = -weight, 1-based
    // potentials u (rows) and v (columns).
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<Index> match(n + 1, 0), way(n + 1, 0);
    for (Index row = 1; row <= n; ++row) {
        match[0] = row;
        Index col0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[col0] = 1;
            const Index r0 = match[col0];
            double delta = inf;
            Index col1 = 0;
            for (Index col = 1; col <= n; ++col) {
                if (used[col]) continue;
                const double cur = -weight(r0 - 1, col - 1) - u[r0] - v[col];
                if (cur < minv[col]) {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if (minv[col] < delta) {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for (Index col = 0; col <= n; ++col) {
                if (used[col]) {
                    u[match[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        do {
            const Index col1 = way[col0];
            match[col0] = match[col1];
            col0 = col1;
        } while (col0 != 0);
    }
    std::vector<int> result(static_cast<std::size_t>(n), -1);
    for (Index col = 1; col <= n; ++col) result[static_cast<std::size_t>(match[col] - 1)] = static_cast<int>(col - 1);
    return result;
}

Matrix contingency(std::span<const int> pred, std::span<const int> truth) {
    require_same_length(pred, truth);
    int kp = 0, kt = 0;
    const auto p = densify(pred, kp);
    const auto t = densify(truth, kt);
    Matrix c = Matrix::Zero(kp, kt);
    for (std::size_t i = 0; i < p.size(); ++i) c(p[i], t[i]) += 1.0;
    return c;
}

double metric_acc(std::span<const int> pred, std::span<const int> truth) {
    const Matrix c = contingency(pred, truth);
    const Index n = std::max(c.rows(), c.cols());
    Matrix square = Matrix::Zero(n, n);
    square.topLeftCorner(c.rows(), c.cols()) = c;
    const auto match = max_weight_assignment(square);
    double hit = 0.0;
    for (Index r = 0; r < n; ++r) hit += square(r, match[static_cast<std::size_t>(r)]);
    return hit / static_cast<double>(pred.size());
}

double metric_nmi(std::span<const int> pred, std::span<const int> truth) {
    const Matrix c = contingency(pred, truth);
    const double n = static_cast<double>(pred.size());
    const Vector rows = c.rowwise().sum();
    const Eigen::RowVectorXd cols = c.colwise().sum();
    auto entropy = [n](auto counts) {
        double h = 0.0;
        for (Index i = 0; i < counts.size(); ++i) {
            const double p = counts(i) / n;
            if (p > 0.0) h -= p * std::log(p);
        }
        return h;
    };
    const double hp = entropy(rows);
    const double ht = entropy(cols);
    if (hp + ht == 0.0) return 1.0;
    double mi = 0.0;
    for (Index i = 0; i < c.rows(); ++i) {
        for (Index j = 0; j < c.cols(); ++j) {
            if (c(i, j) > 0.0) mi += c(i, j) / n * std::log(c(i, j) * n / (rows(i) * cols(j)));
        }
    }
    return std::clamp(mi / ((hp + ht) / 2.0), 0.0, 1.0);
}

double metric_ari(std::span<const int> pred, std::span<const int> truth) {
    const Matrix c = contingency(pred, truth);
    const double n = static_cast<double>(pred.size());
    double index = 0.0;
    for (Index i = 0; i < c.size(); ++i) index += choose2(c.data()[i]);
    double a = 0.0, b = 0.0;
    const Vector rows = c.rowwise().sum();
    const Eigen::RowVectorXd cols = c.colwise().sum();
    for (Index i = 0; i < rows.size(); ++i) a += choose2(rows(i));
    for (Index j = 0; j < cols.size(); ++j) b += choose2(cols(j));
    const double total = choose2(n);
    const double expected = total > 0.0 ? a * b / total : 0.0;
    const double max_index = (a + b) / 2.0;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

MetricsReport evaluate(std::span<const int> pred, std::span<const int> truth) {
    return {metric_acc(pred, truth), metric_nmi(pred, truth), metric_ari(pred, truth)};
}

std::string metrics_json(const MetricsReport& m) {
    nlohmann::ordered_json j;
    j["acc"] = m.acc;
    j["nmi"] = m.nmi;
    j["ari"] = m.ari;
    return j.dump();
}

std::string metrics_table(const MetricsReport& m) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "metric  value\nACC     %.4f\nNMI     %.4f\nARI     %.4f\n", m.acc, m.nmi, m.ari);
    return buf;
}

}  // namespace scrcl
