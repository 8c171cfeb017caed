#include "scrcl/analysis.hpp"

#include "scrcl/error.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scrcl {

namespace {

/// 1-based average ranks; also returns sum over tie groups of t^3 - t.
std::vector<double> average_ranks(const double* values, Index stride, Index n, double& tie_term) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return values[a * stride] < values[b * stride]; });
    std::vector<double> ranks(static_cast<std::size_t>(n));
    tie_term = 0.0;
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j + 1 < n && values[order[j + 1] * stride] == values[order[i] * stride]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Index r = i; r <= j; ++r) ranks[static_cast<std::size_t>(order[r])] = avg;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

MarkerReport deg_scores(const ExpressionMatrix& x, std::span<const int> labels) {
    const Index n = x.n_cells();
    if (static_cast<Index>(labels.size()) != n) {
        throw DimensionError("deg_scores: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " cells");
    }
    int k = 0;
    for (int l : labels) {
        if (l < 0) throw ParameterError("deg_scores: negative label");
        k = std::max(k, l + 1);
    }
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (int t = 0; t < k; ++t) {
        if (sizes[static_cast<std::size_t>(t)] == 0) {
            throw ValidationError("deg_scores: cluster " + std::to_string(t) + " is empty");
        }
    }

    const Matrix& v = x.values();
    const double total = static_cast<double>(n);
    MarkerReport report;
    report.clusters.assign(static_cast<std::size_t>(k), {});
    for (auto& c : report.clusters) c.reserve(static_cast<std::size_t>(x.n_genes()));

    std::vector<double> rank_sum(static_cast<std::size_t>(k)), sum_in(static_cast<std::size_t>(k)),
        expressed(static_cast<std::size_t>(k));
    for (Index g = 0; g < x.n_genes(); ++g) {
        double tie_term = 0.0;
        const auto ranks = average_ranks(v.data() + g, v.cols(), n, tie_term);
        std::fill(rank_sum.begin(), rank_sum.end(), 0.0);
        std::fill(sum_in.begin(), sum_in.end(), 0.0);
        std::fill(expressed.begin(), expressed.end(), 0.0);
        double gene_total = 0.0;
        for (Index i = 0; i < n; ++i) {
            const auto l = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
            rank_sum[l] += ranks[static_cast<std::size_t>(i)];
            sum_in[l] += v(i, g);
            expressed[l] += v(i, g) > 0.0 ? 1.0 : 0.0;
            gene_total += v(i, g);
        }
        for (int t = 0; t < k; ++t) {
            const auto ts = static_cast<std::size_t>(t);
            const double n1 = static_cast<double>(sizes[ts]);
            const double n2 = total - n1;
            const double u = rank_sum[ts] - n1 * (n1 + 1.0) / 2.0;
            const double var = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
            MarkerEntry e;
            e.gene_id = x.gene_ids()[static_cast<std::size_t>(g)];
            e.score = var > 0.0 ? (u - n1 * n2 / 2.0) / std::sqrt(var) : 0.0;
            e.mean_in = sum_in[ts] / n1;
            e.mean_out = n2 > 0.0 ? (gene_total - sum_in[ts]) / n2 : 0.0;
            e.frac_in = expressed[ts] / n1;
            report.clusters[ts].push_back(std::move(e));
        }
    }
    for (auto& c : report.clusters) {
        std::sort(c.begin(), c.end(), [](const MarkerEntry& a, const MarkerEntry& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.gene_id < b.gene_id;
        });
    }
    return report;
}

std::vector<std::vector<std::string>> top_markers(const MarkerReport& report, std::size_t n) {
    if (n < 1) throw ParameterError("top_markers: n must be >= 1");
    std::vector<std::vector<std::string>> out;
    for (const auto& c : report.clusters) {
        std::vector<std::string> genes;
        for (std::size_t r = 0; r < std::min(n, c.size()); ++r) genes.push_back(c[r].gene_id);
        out.push_back(std::move(genes));
    }
    return out;
}

void write_marker_report(const std::filesystem::path& path, const MarkerReport& report, std::size_t top_n) {
    auto out = detail::open_out(path);
    out << "cluster\trank\tgene\tz\tmean_in\tmean_out\tfrac_in\n";
    for (std::size_t t = 0; t < report.clusters.size(); ++t) {
        const auto& c = report.clusters[t];
        const std::size_t limit = top_n == 0 ? c.size() : std::min(top_n, c.size());
        for (std::size_t r = 0; r < limit; ++r) {
            const auto& e = c[r];
            out << t << '\t' << r + 1 << '\t' << e.gene_id << '\t' << detail::format_double(e.score) << '\t'
                << detail::format_double(e.mean_in) << '\t' << detail::format_double(e.mean_out) << '\t'
                << detail::format_double(e.frac_in) << '\n';
        }
    }
}

void export_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids, const Matrix& z,
                       std::span<const int> labels) {
    if (static_cast<Index>(ids.size()) != z.rows()) {
        throw DimensionError("export_embeddings: " + std::to_string(ids.size()) + " ids for " +
                             std::to_string(z.rows()) + " rows");
    }
    if (!labels.empty() && labels.size() != ids.size()) {
        throw DimensionError("export_embeddings: label count does not match rows");
    }
    auto out = detail::open_out(path);
    out << "id";
    if (!labels.empty()) out << ",label";
    for (Index j = 0; j < z.cols(); ++j) out << ",z_" << j + 1;
    out << '\n';
    for (Index i = 0; i < z.rows(); ++i) {
        out << ids[static_cast<std::size_t>(i)];
        if (!labels.empty()) out << ',' << labels[static_cast<std::size_t>(i)];
        for (Index j = 0; j < z.cols(); ++j) out << ',' << detail::format_double(z(i, j));
        out << '\n';
    }
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    ++lineno;
    const auto header = detail::split(line, ',');
    if (header.empty() || header[0] != "id") throw ParseError(detail::where(path, lineno) + ": expected id column");
    const bool has_label = header.size() > 1 && header[1] == "label";
    const std::size_t first = has_label ? 2 : 1;
    const auto width = static_cast<Index>(header.size() - first);

    EmbeddingTable t;
    std::vector<double> data;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != header.size()) throw ParseError(detail::where(path, lineno) + ": wrong field count");
        t.ids.emplace_back(f[0]);
        if (has_label) t.labels.push_back(static_cast<int>(detail::parse_int(f[1], path, lineno)));
        for (std::size_t j = first; j < f.size(); ++j) data.push_back(detail::parse_double(f[j], path, lineno));
    }
    t.z = Eigen::Map<Matrix>(data.data(), static_cast<Index>(t.ids.size()), width);
    return t;
}

}  // namespace scrcl
