#pragma once

#include "scrcl/matrix.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace scrcl {

struct ClusterAssignment {
    std::vector<int> labels;  // each in [0, k)
    int k = 0;
    double inertia = 0.0;     // sum of squared distances to cluster means
};

struct MetricsReport {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
};

/// [z_m | z_g].
Matrix concat_embed(const Matrix& z_m, const Matrix& z_g);

struct KMeansOptions {
    int restarts = 20;
    int max_iter = 300;
    double tol = 1e-6;  // relative inertia change
};

/// k-means++ seeding and Lloyd iterations, best restart by (inertia,
/// restart index). A cluster that empties takes the point farthest from
/// its current centroid.
ClusterAssignment kmeans(const Matrix& z, int k, std::uint64_t seed, const KMeansOptions& opts = {});

/// Optimal assignment for a square weight matrix: result[row] = column,
/// maximizing the summed weight.
std::vector<int> max_weight_assignment(const Matrix& weight);

/// Contingency counts; rows are pred labels, columns truth labels. Labels
/// are densified in first-appearance order.
Matrix contingency(std::span<const int> pred, std::span<const int> truth);

/// Fraction of cells matched under the best one-to-one label mapping.
double metric_acc(std::span<const int> pred, std::span<const int> truth);
/// I(P;T) / ((H(P) + H(T)) / 2); two single-cluster labelings give 1.
double metric_nmi(std::span<const int> pred, std::span<const int> truth);
/// Pair-counting adjusted Rand index.
double metric_ari(std::span<const int> pred, std::span<const int> truth);

MetricsReport evaluate(std::span<const int> pred, std::span<const int> truth);

/// {"acc":..,"nmi":..,"ari":..}
std::string metrics_json(const MetricsReport& m);
std::string metrics_table(const MetricsReport& m);

}  // namespace scrcl
