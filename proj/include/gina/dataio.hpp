#pragma once

// Partially observed datasets: the MaskedMatrix container, CSV ingestion and
// emission, train/validation/test splits, rating rescaling and assembly of
// the auxiliary variables U.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gina/distributions.hpp"

namespace gina {

enum class ColumnKind { Continuous, Binary };

/// n x D values with an n x D observation mask (1 = observed) and an
/// optional fully observed n x A auxiliary block. Values at unobserved
/// positions carry no meaning.
struct MaskedMatrix {
    Tensor values;
    Tensor mask;
    Tensor aux;  // n x 0 when absent
    std::vector<std::string> names;
    std::vector<std::string> aux_names;
    std::vector<ColumnKind> kinds;

    [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
    [[nodiscard]] Eigen::Index aux_cols() const { return aux.cols(); }
    [[nodiscard]] bool has_aux() const { return aux.cols() > 0; }
    [[nodiscard]] bool observed(Eigen::Index i, Eigen::Index d) const { return mask(i, d) != 0.0; }
    [[nodiscard]] Eigen::Index observed_count() const { return static_cast<Eigen::Index>(mask.sum()); }

    /// Values with every unobserved entry replaced by zero.
    [[nodiscard]] Tensor zero_filled() const { return (mask.array() != 0.0).select(values, 0.0); }

    void validate() const {
        const auto n = values.rows();
        const auto d = values.cols();
        if (mask.rows() != n || mask.cols() != d)
            throw DataError("mask shape " + shape_str(mask) + " does not match values " + shape_str(values));
        if (aux.cols() > 0 && aux.rows() != n)
            throw DataError("aux has " + std::to_string(aux.rows()) + " rows, values " + std::to_string(n));
        if (!names.empty() && static_cast<Eigen::Index>(names.size()) != d)
            throw DataError("column name count does not match column count");
        if (!kinds.empty() && static_cast<Eigen::Index>(kinds.size()) != d)
            throw DataError("column kind count does not match column count");
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                const double m = mask(i, j);
                if (m != 0.0 && m != 1.0) throw DataError("mask entry is not binary");
                if (m == 1.0 && !std::isfinite(values(i, j))) throw DataError("observed value is not finite");
                if (m == 1.0 && !kinds.empty() && kinds[j] == ColumnKind::Binary && values(i, j) != 0.0 &&
                    values(i, j) != 1.0)
                    throw DataError("binary column " + std::to_string(j) + " holds a non-binary value");
            }
        }
        if (!aux.allFinite()) throw DataError("auxiliary block must be fully observed and finite");
    }

    static MaskedMatrix complete(Tensor values) {
        MaskedMatrix m;
        m.mask = Tensor::Ones(values.rows(), values.cols());
        m.aux = Tensor(values.rows(), 0);
        m.values = std::move(values);
        m.kinds.assign(m.values.cols(), ColumnKind::Continuous);
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) m.names.push_back("x" + std::to_string(j + 1));
        return m;
    }
};

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view cell, std::size_t line_no, std::size_t col) {
    double v = 0.0;
    const char* first = cell.data();
    if (!cell.empty() && cell.front() == '+') ++first;
    auto res = std::from_chars(first, cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw DataError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                        ": non-numeric cell '" + std::string(cell) + "'");
    return v;
}

}  // namespace detail

/// Parse CSV text. First row is the header; an empty cell marks a missing
/// value; columns whose name starts with "aux_" form the auxiliary block
/// and must be complete.
inline MaskedMatrix parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV: header row missing");
    const auto header = detail::split_csv_line(detail::trim(line));
    std::vector<std::size_t> data_idx;
    std::vector<std::size_t> aux_idx;
    MaskedMatrix m;
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::string name(detail::trim(header[c]));
        if (name.rfind("aux_", 0) == 0) {
            aux_idx.push_back(c);
            m.aux_names.push_back(std::move(name));
        } else {
            data_idx.push_back(c);
            m.names.push_back(std::move(name));
        }
    }
    std::vector<double> vals;
    std::vector<double> msk;
    std::vector<double> aux;
    std::size_t line_no = 1;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto cells = detail::split_csv_line(trimmed);
        if (cells.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": ragged row with " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        for (std::size_t c : data_idx) {
            const auto cell = detail::trim(cells[c]);
            if (cell.empty()) {
                vals.push_back(0.0);
                msk.push_back(0.0);
            } else {
                vals.push_back(detail::parse_double(cell, line_no, c));
                msk.push_back(1.0);
            }
        }
        for (std::size_t c : aux_idx) {
            const auto cell = detail::trim(cells[c]);
            if (cell.empty())
                throw DataError("line " + std::to_string(line_no) + ": missing auxiliary cell in column '" +
                                std::string(header[c]) + "'");
            aux.push_back(detail::parse_double(cell, line_no, c));
        }
        ++n;
    }
    const auto d = static_cast<Eigen::Index>(data_idx.size());
    const auto a = static_cast<Eigen::Index>(aux_idx.size());
    const auto rows = static_cast<Eigen::Index>(n);
    m.values = Eigen::Map<Tensor>(vals.data(), rows, d);
    m.mask = Eigen::Map<Tensor>(msk.data(), rows, d);
    m.aux = Eigen::Map<Tensor>(aux.data(), rows, a);
    m.kinds.assign(d, ColumnKind::Binary);
    for (Eigen::Index j = 0; j < d; ++j) {
        bool any = false;
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (m.mask(i, j) == 0.0) continue;
            any = true;
            if (m.values(i, j) != 0.0 && m.values(i, j) != 1.0) {
                m.kinds[j] = ColumnKind::Continuous;
                break;
            }
        }
        if (!any) m.kinds[j] = ColumnKind::Continuous;
    }
    return m;
}

inline MaskedMatrix load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return parse_csv(in);
}

/// Canonical emission: data columns, then aux columns; shortest round-trip
/// decimals; empty cell for missing; "\n" line endings.
inline void write_csv(std::ostream& out, const MaskedMatrix& m) {
    std::string line;
    auto name_of = [&](Eigen::Index j) {
        return j < static_cast<Eigen::Index>(m.names.size()) ? m.names[j] : "x" + std::to_string(j + 1);
    };
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) line += ',';
        line += name_of(j);
    }
    for (Eigen::Index j = 0; j < m.aux_cols(); ++j) {
        if (m.cols() || j) line += ',';
        line += j < static_cast<Eigen::Index>(m.aux_names.size()) ? m.aux_names[j] : "aux_" + std::to_string(j + 1);
    }
    out << line << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        line.clear();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) line += ',';
            if (m.observed(i, j)) line += format_double(m.values(i, j));
        }
        for (Eigen::Index j = 0; j < m.aux_cols(); ++j) {
            if (m.cols() || j) line += ',';
            line += format_double(m.aux(i, j));
        }
        out << line << '\n';
    }
}

inline void save_csv(const std::string& path, const MaskedMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_csv(out, m);
    if (!out) throw DataError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitUnit { Row, ObservedEntry };

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;
    SplitUnit unit = SplitUnit::ObservedEntry;
};

struct SplitResult {
    MaskedMatrix train;
    MaskedMatrix val;
    MaskedMatrix test;
};

namespace detail {

inline std::array<std::size_t, 3> split_counts(const SplitSpec& s, std::size_t total) {
    const std::array<double, 3> f{s.train, s.val, s.test};
    for (double x : f)
        if (!(x >= 0.0) || x > 1.0) throw ConfigError("split fractions must lie in [0, 1]");
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    std::array<std::size_t, 3> c{};
    c[0] = static_cast<std::size_t>(std::llround(f[0] * static_cast<double>(total)));
    c[1] = static_cast<std::size_t>(std::llround(f[1] * static_cast<double>(total)));
    c[0] = std::min(c[0], total);
    c[1] = std::min(c[1], total - c[0]);
    c[2] = total - c[0] - c[1];
    if (f[2] == 0.0 && c[2] > 0) {
        (f[1] > 0.0 ? c[1] : c[0]) += c[2];
        c[2] = 0;
    }
    for (int i = 0; i < 3; ++i)
        if (f[i] > 0.0 && c[i] == 0)
            throw DataError("split leaves part " + std::to_string(i) + " empty (only " + std::to_string(total) +
                            " units)");
    return c;
}

inline MaskedMatrix take_rows(const MaskedMatrix& m, const std::vector<Eigen::Index>& rows) {
    MaskedMatrix out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.values.resize(n, m.cols());
    out.mask.resize(n, m.cols());
    out.aux.resize(n, m.aux_cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values.row(i) = m.values.row(rows[i]);
        out.mask.row(i) = m.mask.row(rows[i]);
        if (m.aux_cols()) out.aux.row(i) = m.aux.row(rows[i]);
    }
    out.names = m.names;
    out.aux_names = m.aux_names;
    out.kinds = m.kinds;
    return out;
}

}  // namespace detail

/// Entry unit: every part keeps all rows; observed entries are partitioned
/// by masking. Row unit: parts hold disjoint row sets.
inline SplitResult split(const MaskedMatrix& data, const SplitSpec& spec) {
    Rng rng(spec.seed);
    if (spec.unit == SplitUnit::Row) {
        std::vector<Eigen::Index> idx(data.rows());
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto c = detail::split_counts(spec, idx.size());
        std::vector<Eigen::Index> a(idx.begin(), idx.begin() + c[0]);
        std::vector<Eigen::Index> b(idx.begin() + c[0], idx.begin() + c[0] + c[1]);
        std::vector<Eigen::Index> t(idx.begin() + c[0] + c[1], idx.end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::sort(t.begin(), t.end());
        return {detail::take_rows(data, a), detail::take_rows(data, b), detail::take_rows(data, t)};
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> entries;
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            if (data.observed(i, j)) entries.emplace_back(i, j);
    std::shuffle(entries.begin(), entries.end(), rng);
    const auto c = detail::split_counts(spec, entries.size());
    SplitResult out{data, data, data};
    out.train.mask.setZero();
    out.val.mask.setZero();
    out.test.mask.setZero();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        auto [i, j] = entries[k];
        MaskedMatrix& part = k < c[0] ? out.train : (k < c[0] + c[1] ? out.val : out.test);
        part.mask(i, j) = 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rating rescaling

/// Affine map of [lo, hi] onto [0, 1].
struct RatingScale {
    double lo = 0.0;
    double hi = 1.0;

    [[nodiscard]] double forward(double x) const { return (x - lo) / (hi - lo); }
    [[nodiscard]] double inverse(double y) const { return lo + y * (hi - lo); }
    [[nodiscard]] Tensor inverse(const Tensor& y) const { return (y.array() * (hi - lo) + lo).matrix(); }
};

inline std::pair<MaskedMatrix, RatingScale> rescale_ratings(const MaskedMatrix& data, double lo, double hi) {
    if (!(hi > lo)) throw ConfigError("rescale_ratings: need hi > lo");
    RatingScale s{lo, hi};
    MaskedMatrix out = data;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            if (!data.observed(i, j)) continue;
            const double v = data.values(i, j);
            if (v < lo || v > hi)
                throw DataError("rescale_ratings: value " + format_double(v) + " at (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") outside [" + format_double(lo) + ", " + format_double(hi) +
                                "]");
            out.values(i, j) = s.forward(v);
        }
    }
    out.kinds.assign(out.cols(), ColumnKind::Continuous);
    return {std::move(out), s};
}

// ---------------------------------------------------------------------------
// Auxiliary variables

enum class AuxSource { Metadata, Mask };

/// U for the conditional prior: either the metadata block or a snapshot of
/// the observation mask taken at call time.
inline Tensor assemble_aux(const MaskedMatrix& data, AuxSource source) {
    if (source == AuxSource::Mask) return data.mask;
    if (!data.has_aux()) throw DataError("auxiliary metadata requested but the dataset has no aux_ columns");
    return data.aux;
}

}  // namespace gina
