#include "scrcl/ingest.hpp"

#include "scrcl/error.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace scrcl {

namespace fs = std::filesystem;
using detail::format_double;
using detail::split;
using detail::trim;
using detail::where;

ExpressionMatrix::ExpressionMatrix(Matrix values, std::vector<std::string> cell_ids,
                                   std::vector<std::string> gene_ids)
    : values_(std::move(values)), cell_ids_(std::move(cell_ids)), gene_ids_(std::move(gene_ids)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
        throw ValidationError("expression matrix is empty (" + shape_string(values_) + ")");
    }
    if (static_cast<Index>(cell_ids_.size()) != values_.rows() ||
        static_cast<Index>(gene_ids_.size()) != values_.cols()) {
        throw ValidationError("expression matrix " + shape_string(values_) + " does not match " +
                              std::to_string(cell_ids_.size()) + " cell ids and " +
                              std::to_string(gene_ids_.size()) + " gene ids");
    }
    for (Index i = 0; i < values_.rows(); ++i) {
        for (Index j = 0; j < values_.cols(); ++j) {
            const double v = values_(i, j);
            if (!std::isfinite(v)) {
                throw ValidationError("non-finite value at cell '" + cell_ids_[i] + "' (row " +
                                      std::to_string(i + 1) + "), gene '" + gene_ids_[j] + "' (col " +
                                      std::to_string(j + 1) + ")");
            }
            if (v < 0.0) {
                throw ValidationError("negative value " + format_double(v) + " at cell '" +
                                      cell_ids_[i] + "' (row " + std::to_string(i + 1) + "), gene '" +
                                      gene_ids_[j] + "' (col " + std::to_string(j + 1) + ")");
            }
        }
    }
    std::unordered_set<std::string> seen;
    for (const auto& g : gene_ids_) {
        if (!seen.insert(g).second) throw ValidationError("duplicate gene id '" + g + "'");
    }
}

MatrixFormat parse_matrix_format(const std::string& name) {
    if (name == "csv") return MatrixFormat::Csv;
    if (name == "mtx") return MatrixFormat::Mtx;
    throw ParameterError("unknown matrix format '" + name + "' (expected csv or mtx)");
}

namespace {

ExpressionMatrix load_csv(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    ++lineno;
    auto header = split(line, ',');
    if (header.size() < 2) throw ParseError(where(path, lineno) + ": header needs id and gene columns");
    std::vector<std::string> genes(header.begin() + 1, header.end());

    std::vector<std::string> cells;
    std::vector<double> data;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != header.size()) {
            throw ParseError(where(path, lineno) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        }
        cells.emplace_back(fields[0]);
        for (std::size_t k = 1; k < fields.size(); ++k) {
            const double v = detail::parse_double(fields[k], path, lineno);
            if (v < 0.0) {
                throw ValidationError(where(path, lineno) + ": negative value " + format_double(v) +
                                      " at row " + std::to_string(cells.size()) + " (cell '" +
                                      cells.back() + "'), col " + std::to_string(k) + " (gene '" +
                                      genes[k - 1] + "')");
            }
            data.push_back(v);
        }
    }
    Matrix values = Eigen::Map<Matrix>(data.data(), static_cast<Index>(cells.size()),
                                       static_cast<Index>(genes.size()));
    return ExpressionMatrix(std::move(values), std::move(cells), std::move(genes));
}

std::vector<std::string> read_id_list(const fs::path& path) {
    auto in = detail::open_in(path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty()) continue;
        // 10x feature files carry extra columns; the first one is the id.
        ids.emplace_back(split(t, '\t').front());
    }
    return ids;
}

ExpressionMatrix load_mtx(const fs::path& path) {
    const fs::path dir = path.parent_path();
    auto genes = read_id_list(dir / "genes.tsv");
    auto cells = read_id_list(dir / "barcodes.tsv");

    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    ++lineno;
    std::istringstream banner(line);
    std::string tag, object, layout, field, symmetry;
    banner >> tag >> object >> layout >> field >> symmetry;
    if (tag != "%%MatrixMarket" || object != "matrix") {
        throw ParseError(where(path, lineno) + ": missing %%MatrixMarket matrix banner");
    }
    if (layout != "coordinate") throw ParseError(where(path, lineno) + ": only coordinate layout is supported");
    const bool pattern = field == "pattern";
    if (!pattern && field != "real" && field != "integer" && field != "double") {
        throw ParseError(where(path, lineno) + ": unsupported field '" + field + "'");
    }
    if (symmetry != "general") throw ParseError(where(path, lineno) + ": only general symmetry is supported");

    long long rows = -1, cols = -1, nnz = -1;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '%') continue;
        std::istringstream size_line{std::string(t)};
        if (!(size_line >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
            throw ParseError(where(path, lineno) + ": malformed size line");
        }
        break;
    }
    if (rows < 0) throw ParseError(path.string() + ": missing size line");

    const auto n_cells = static_cast<long long>(cells.size());
    const auto n_genes = static_cast<long long>(genes.size());
    bool transposed = false;
    if (rows == n_cells && cols == n_genes) {
        transposed = false;
    } else if (rows == n_genes && cols == n_cells) {
        transposed = true;
    } else {
        throw ParseError(where(path, lineno) + ": matrix is " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " but sidecars list " + std::to_string(n_cells) +
                         " barcodes and " + std::to_string(n_genes) + " genes");
    }

    Matrix values = Matrix::Zero(n_cells, n_genes);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> filled =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_cells, n_genes, false);
    long long count = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '%') continue;
        std::vector<std::string_view> tok;
        for (auto part : split(t, ' ')) {
            if (!part.empty()) tok.push_back(part);
        }
        if (tok.size() == 1) {
            // tolerate tab separation
            tok.clear();
            for (auto part : split(t, '\t')) {
                if (!part.empty()) tok.push_back(part);
            }
        }
        if (tok.size() != (pattern ? 2u : 3u)) throw ParseError(where(path, lineno) + ": malformed entry");
        const long long r = detail::parse_int(tok[0], path, lineno);
        const long long c = detail::parse_int(tok[1], path, lineno);
        if (r < 1 || r > rows || c < 1 || c > cols) {
            throw ParseError(where(path, lineno) + ": index (" + std::to_string(r) + "," +
                             std::to_string(c) + ") out of range");
        }
        const double v = pattern ? 1.0 : detail::parse_double(tok[2], path, lineno);
        const Index cell = transposed ? c - 1 : r - 1;
        const Index gene = transposed ? r - 1 : c - 1;
        if (v < 0.0) {
            throw ValidationError(where(path, lineno) + ": negative value " + format_double(v) +
                                  " at row " + std::to_string(cell + 1) + ", col " +
                                  std::to_string(gene + 1));
        }
        if (filled(cell, gene)) throw ParseError(where(path, lineno) + ": duplicate entry");
        filled(cell, gene) = true;
        values(cell, gene) = v;
        ++count;
    }
    if (count != nnz) {
        throw ParseError(path.string() + ": header promises " + std::to_string(nnz) + " entries, found " +
                         std::to_string(count));
    }
    return ExpressionMatrix(std::move(values), std::move(cells), std::move(genes));
}

}  // namespace

ExpressionMatrix load_expression(const fs::path& path, MatrixFormat format) {
    ExpressionMatrix x = format == MatrixFormat::Csv ? load_csv(path) : load_mtx(path);
    if (x.n_cells() < 2 || x.n_genes() < 2) {
        throw ValidationError(path.string() + ": expression matrix must be at least 2x2, got " +
                              shape_string(x.values()));
    }
    return x;
}

void write_expression(const ExpressionMatrix& x, const fs::path& path, MatrixFormat format) {
    const Matrix& v = x.values();
    if (format == MatrixFormat::Csv) {
        auto out = detail::open_out(path);
        out << "id";
        for (const auto& g : x.gene_ids()) out << ',' << g;
        out << '\n';
        for (Index i = 0; i < v.rows(); ++i) {
            out << x.cell_ids()[i];
            for (Index j = 0; j < v.cols(); ++j) out << ',' << format_double(v(i, j));
            out << '\n';
        }
        return;
    }
    const fs::path dir = path.parent_path();
    {
        auto genes = detail::open_out(dir / "genes.tsv");
        for (const auto& g : x.gene_ids()) genes << g << '\n';
        auto barcodes = detail::open_out(dir / "barcodes.tsv");
        for (const auto& c : x.cell_ids()) barcodes << c << '\n';
    }
    auto out = detail::open_out(path);
    const Index nnz = (v.array() != 0.0).count();
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << v.rows() << ' ' << v.cols() << ' ' << nnz << '\n';
    for (Index i = 0; i < v.rows(); ++i) {
        for (Index j = 0; j < v.cols(); ++j) {
            if (v(i, j) != 0.0) out << i + 1 << ' ' << j + 1 << ' ' << format_double(v(i, j)) << '\n';
        }
    }
}

LabelTable read_labels(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    ++lineno;
    auto header = split(line, ',');
    if (header.size() != 2) throw ParseError(where(path, lineno) + ": expected header id,label");

    LabelTable table;
    std::unordered_map<std::string, int> index;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 2) throw ParseError(where(path, lineno) + ": expected 2 fields");
        std::string id(fields[0]);
        if (!seen.insert(id).second) throw ParseError(where(path, lineno) + ": duplicate id '" + id + "'");
        std::string name(fields[1]);
        auto [it, inserted] = index.emplace(name, static_cast<int>(table.names.size()));
        if (inserted) table.names.push_back(name);
        table.ids.push_back(std::move(id));
        table.labels.push_back(it->second);
    }
    return table;
}

void write_labels(const fs::path& path, const std::vector<std::string>& ids,
                  const std::vector<int>& labels) {
    if (ids.size() != labels.size()) throw DimensionError("write_labels: ids and labels differ in length");
    auto out = detail::open_out(path);
    out << "id,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << labels[i] << '\n';
}

std::vector<int> align_labels(const LabelTable& table, const std::vector<std::string>& cell_ids) {
    std::unordered_map<std::string, int> by_id;
    for (std::size_t i = 0; i < table.ids.size(); ++i) by_id.emplace(table.ids[i], table.labels[i]);
    std::vector<int> out;
    out.reserve(cell_ids.size());
    std::vector<std::string> offenders;
    std::unordered_set<std::string> wanted(cell_ids.begin(), cell_ids.end());
    for (const auto& id : cell_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            offenders.push_back(id + " (no label)");
            continue;
        }
        out.push_back(it->second);
    }
    for (const auto& id : table.ids) {
        if (!wanted.count(id)) offenders.push_back(id + " (unknown cell)");
    }
    if (!offenders.empty()) {
        std::string msg = "label ids do not match cell ids (" + std::to_string(offenders.size()) + " offenders): ";
        for (std::size_t i = 0; i < std::min<std::size_t>(5, offenders.size()); ++i) {
            if (i) msg += ", ";
            msg += offenders[i];
        }
        throw ValidationError(msg);
    }
    return out;
}

Matrix read_coords(const fs::path& path, const std::vector<std::string>& cell_ids) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    ++lineno;
    if (split(line, ',').size() != 3) throw ParseError(where(path, lineno) + ": expected header id,x,y");

    std::unordered_map<std::string, Index> row_of;
    for (std::size_t i = 0; i < cell_ids.size(); ++i) row_of.emplace(cell_ids[i], static_cast<Index>(i));
    Matrix coords(static_cast<Index>(cell_ids.size()), 2);
    std::vector<char> seen(cell_ids.size(), 0);
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 3) throw ParseError(where(path, lineno) + ": expected 3 fields");
        auto it = row_of.find(std::string(fields[0]));
        if (it == row_of.end()) {
            throw ValidationError(where(path, lineno) + ": unknown cell id '" + std::string(fields[0]) + "'");
        }
        if (seen[it->second]) {
            throw ValidationError(where(path, lineno) + ": duplicate cell id '" + std::string(fields[0]) + "'");
        }
        seen[it->second] = 1;
        coords(it->second, 0) = detail::parse_double(fields[1], path, lineno);
        coords(it->second, 1) = detail::parse_double(fields[2], path, lineno);
        ++count;
    }
    if (count != cell_ids.size()) {
        throw ValidationError(path.string() + ": " + std::to_string(count) + " coordinates for " +
                              std::to_string(cell_ids.size()) + " cells");
    }
    return coords;
}

void write_coords(const fs::path& path, const std::vector<std::string>& ids, const Matrix& coords) {
    auto out = detail::open_out(path);
    out << "id,x,y\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto r = static_cast<Index>(i);
        out << ids[i] << ',' << format_double(coords(r, 0)) << ',' << format_double(coords(r, 1)) << '\n';
    }
}

ExpressionMatrix preprocess(const ExpressionMatrix& x, const PreprocessConfig& cfg) {
    if (!(cfg.target_sum > 0.0)) throw ParameterError("preprocess: target_sum must be > 0");
    Matrix v = x.values();
    for (Index i = 0; i < v.rows(); ++i) {
        const double total = v.row(i).sum();
        if (!(total > 0.0)) throw ValidationError("preprocess: cell '" + x.cell_ids()[i] + "' has zero total counts");
        v.row(i) *= cfg.target_sum / total;
    }
    if (cfg.log1p) v = v.array().log1p().matrix();

    const Index m = v.cols();
    const Index keep = cfg.n_hvg ? std::min(m, *cfg.n_hvg) : m;
    if (keep < 1) throw ParameterError("preprocess: n_hvg must be >= 1");
    if (keep == m) return ExpressionMatrix(std::move(v), x.cell_ids(), x.gene_ids());

    const Eigen::RowVectorXd means = v.colwise().mean();
    const Eigen::RowVectorXd var = (v.rowwise() - means).cwiseAbs2().colwise().mean();
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return var(a) > var(b); });
    order.resize(static_cast<std::size_t>(keep));
    std::sort(order.begin(), order.end());

    Matrix kept(v.rows(), keep);
    std::vector<std::string> genes;
    genes.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        kept.col(static_cast<Index>(k)) = v.col(order[k]);
        genes.push_back(x.gene_ids()[order[k]]);
    }
    return ExpressionMatrix(std::move(kept), x.cell_ids(), std::move(genes));
}

void validate(const SyntheticSpec& s) {
    auto fail = [](const std::string& msg) { throw ValidationError("synthetic spec: " + msg); };
    if (s.n_cells < 2) fail("n_cells must be >= 2");
    if (s.n_genes < 2) fail("n_genes must be >= 2");
    if (s.n_types < 1) fail("n_types must be >= 1");
    if (s.n_types > s.n_cells) fail("n_types must not exceed n_cells");
    if (s.markers_per_type < 1) fail("markers_per_type must be >= 1");
    if (s.markers_per_type * s.n_types > s.n_genes) fail("markers_per_type * n_types exceeds n_genes");
    if (!(s.marker_lift > 0.0)) fail("marker_lift must be > 0");
    if (!(s.noise_sd >= 0.0)) fail("noise_sd must be >= 0");
    if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
}

namespace {

std::string padded_id(const char* prefix, Index i, Index total) {
    const std::string digits = std::to_string(std::max<Index>(total - 1, 0));
    std::string num = std::to_string(i);
    return prefix + std::string(digits.size() - std::min(digits.size(), num.size()), '0') + num;
}

}  // namespace

std::vector<std::string> planted_markers(const SyntheticSpec& spec, int type) {
    std::vector<std::string> out;
    for (Index g = type * spec.markers_per_type; g < (type + 1) * spec.markers_per_type; ++g) {
        out.push_back(padded_id("gene", g, spec.n_genes));
    }
    return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);

    std::vector<int> labels(static_cast<std::size_t>(spec.n_cells));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % spec.n_types);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix values(spec.n_cells, spec.n_genes);
    for (Index i = 0; i < spec.n_cells; ++i) {
        const Index block_begin = labels[i] * spec.markers_per_type;
        const Index block_end = block_begin + spec.markers_per_type;
        for (Index g = 0; g < spec.n_genes; ++g) {
            const double mean = (g >= block_begin && g < block_end) ? spec.marker_lift : 0.0;
            double v = std::max(0.0, mean + spec.noise_sd * noise(rng));
            if (unit(rng) < spec.dropout_rate) v = 0.0;
            values(i, g) = v;
        }
    }

    std::vector<std::string> cells, genes;
    for (Index i = 0; i < spec.n_cells; ++i) cells.push_back(padded_id("cell", i, spec.n_cells));
    for (Index g = 0; g < spec.n_genes; ++g) genes.push_back(padded_id("gene", g, spec.n_genes));

    Dataset ds{ExpressionMatrix(std::move(values), std::move(cells), std::move(genes)), labels,
               std::nullopt, spec.n_types};
    if (spec.spatial_layout == SpatialLayout::LayeredBands) {
        // Type t occupies the horizontal band y in [t, t + 1).
        Matrix coords(spec.n_cells, 2);
        for (Index i = 0; i < spec.n_cells; ++i) {
            coords(i, 0) = 10.0 * unit(rng);
            coords(i, 1) = labels[i] + 0.1 + 0.8 * unit(rng);
        }
        ds.coords = std::move(coords);
    }
    return ds;
}

}  // namespace scrcl
