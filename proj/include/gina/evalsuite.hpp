#pragma once

// Evaluation: imputation errors, the two-sample energy distance used to
// score generated samples against ground truth, the decoder injectivity
// check over row subsets, and Welch's t-test for level changes.

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "gina/dataio.hpp"
#include "gina/models.hpp"

namespace gina {

struct MetricReport {
    std::string name;
    double value = 0.0;
    double std_error = 0.0;
    int n_repeats = 1;
    std::vector<double> per_column;  // empty when not broken down
};

inline void to_json(nlohmann::json& j, const MetricReport& r) {
    j = nlohmann::json{{"name", r.name}, {"value", r.value}, {"std_error", r.std_error}, {"n_repeats", r.n_repeats}};
    if (!r.per_column.empty()) {
        nlohmann::json cols = nlohmann::json::array();
        for (double v : r.per_column) {
            if (std::isfinite(v))
                cols.push_back(v);
            else
                cols.push_back(nullptr);
        }
        j["per_column"] = cols;
    }
}

/// Combine repeated runs of one metric into mean +- standard error.
inline MetricReport summarize(std::string name, const std::vector<double>& values) {
    if (values.empty()) throw DataError("summarize: no values");
    MetricReport r;
    r.name = std::move(name);
    r.n_repeats = static_cast<int>(values.size());
    r.value = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.value) * (v - r.value);
        r.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
    }
    return r;
}

namespace detail {

inline void check_same_shape(const Tensor& pred, const Tensor& truth, const Tensor& mask, const char* what) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || mask.rows() != truth.rows() ||
        mask.cols() != truth.cols())
        throw ShapeError(std::string(what) + ": pred " + shape_str(pred) + ", truth " + shape_str(truth) + ", mask " +
                         shape_str(mask) + " must agree");
}

}  // namespace detail

/// Mean squared error over entries with eval_mask = 1. Pass values already
/// mapped back to the original data scale.
inline MetricReport mse(const Tensor& pred, const Tensor& truth, const Tensor& eval_mask) {
    detail::check_same_shape(pred, truth, eval_mask, "mse");
    double ss = 0.0;
    double count = 0.0;
    std::vector<double> col_ss(truth.cols(), 0.0);
    std::vector<double> col_n(truth.cols(), 0.0);
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (Eigen::Index j = 0; j < truth.cols(); ++j) {
            if (eval_mask(i, j) == 0.0) continue;
            const double e = pred(i, j) - truth(i, j);
            ss += e * e;
            count += 1.0;
            col_ss[j] += e * e;
            col_n[j] += 1.0;
        }
    }
    if (count == 0.0) throw DataError("mse: no scored entries");
    MetricReport r;
    r.name = "mse";
    r.value = ss / count;
    for (std::size_t j = 0; j < col_ss.size(); ++j)
        r.per_column.push_back(col_n[j] > 0.0 ? col_ss[j] / col_n[j] : std::numeric_limits<double>::quiet_NaN());
    return r;
}

/// MSE after reverting a [lo, hi] -> [0, 1] rating rescale on both sides.
inline MetricReport mse(const Tensor& pred, const Tensor& truth, const Tensor& eval_mask, const RatingScale& scale) {
    return mse(scale.inverse(pred), scale.inverse(truth), eval_mask);
}

/// Per-column MSE over scored rows, then the unweighted mean over columns
/// with at least one scored entry.
inline MetricReport debiased_mse(const Tensor& pred, const Tensor& truth, const Tensor& eval_mask) {
    detail::check_same_shape(pred, truth, eval_mask, "debiased_mse");
    MetricReport r;
    r.name = "debiased_mse";
    double total = 0.0;
    int scored_cols = 0;
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
        double ss = 0.0;
        double count = 0.0;
        for (Eigen::Index i = 0; i < truth.rows(); ++i) {
            if (eval_mask(i, j) == 0.0) continue;
            const double e = pred(i, j) - truth(i, j);
            ss += e * e;
            count += 1.0;
        }
        if (count == 0.0) {
            r.per_column.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        r.per_column.push_back(ss / count);
        total += ss / count;
        ++scored_cols;
    }
    if (scored_cols == 0) throw DataError("debiased_mse: no column has a scored entry");
    r.value = total / scored_cols;
    return r;
}

// ---------------------------------------------------------------------------
// Energy distance

namespace detail {

inline double mean_pairwise_distance(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < b.rows(); ++j) row += (a.row(i) - b.row(j)).norm();
        s += row;
    }
    return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace detail

/// 2 E|a - b| - E|a - a'| - E|b - b'| with all-pairs averages.
inline double energy_distance(const Tensor& a, const Tensor& b) {
    if (a.rows() < 2 || b.rows() < 2) throw DataError("energy_distance: need at least two samples per set");
    if (a.cols() != b.cols())
        throw ShapeError("energy_distance: sample dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
    return 2.0 * detail::mean_pairwise_distance(a, b) - detail::mean_pairwise_distance(a, a) -
           detail::mean_pairwise_distance(b, b);
}

/// Bootstrap standard error of energy_distance(a, b), resampling both sets.
inline double energy_distance_bootstrap_se(const Tensor& a, const Tensor& b, int reps, Rng& rng) {
    if (reps < 2) return 0.0;
    std::uniform_int_distribution<Eigen::Index> ia(0, a.rows() - 1);
    std::uniform_int_distribution<Eigen::Index> ib(0, b.rows() - 1);
    std::vector<double> vals;
    vals.reserve(reps);
    Tensor ra(a.rows(), a.cols());
    Tensor rb(b.rows(), b.cols());
    for (int k = 0; k < reps; ++k) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) ra.row(i) = a.row(ia(rng));
        for (Eigen::Index i = 0; i < b.rows(); ++i) rb.row(i) = b.row(ib(rng));
        vals.push_back(energy_distance(ra, rb));
    }
    const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / reps;
    double ss = 0.0;
    for (double v : vals) ss += (v - m) * (v - m);
    return std::sqrt(ss / (reps - 1));
}

// ---------------------------------------------------------------------------
// Injectivity of linear read-outs restricted to row subsets

struct SubsetResult {
    std::vector<Eigen::Index> rows;
    Eigen::Index rank = 0;
    bool pass = false;
};

struct InjectivityVerdict {
    Eigen::Index d0 = 0;  // minimum subset size; also the required rank
    double rank_tolerance = 1e-10;
    bool exhaustive = false;
    std::vector<SubsetResult> subsets;

    [[nodiscard]] bool pass() const {
        return std::all_of(subsets.begin(), subsets.end(), [](const SubsetResult& s) { return s.pass; });
    }
    [[nodiscard]] std::size_t failures() const {
        return static_cast<std::size_t>(
            std::count_if(subsets.begin(), subsets.end(), [](const SubsetResult& s) { return !s.pass; }));
    }
};

/// Numerical rank by SVD with threshold max(rows, cols) * sigma_max * rel_tol.
inline Eigen::Index numerical_rank(const Tensor& m, double rel_tol = 1e-10) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    const double thresh = static_cast<double>(std::max(m.rows(), m.cols())) * s[0] * rel_tol;
    return static_cast<Eigen::Index>((s.array() > thresh).count());
}

inline SubsetResult check_subset(const Tensor& w, std::vector<Eigen::Index> rows, Eigen::Index d0, double tol) {
    Tensor sub(static_cast<Eigen::Index>(rows.size()), w.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = w.row(rows[i]);
    SubsetResult r;
    r.rows = std::move(rows);
    r.rank = numerical_rank(sub, tol);
    r.pass = r.rank == d0;
    return r;
}

/// Verify that W (D x D0) stays injective on every row subset O with
/// |O| >= min_size: rank(W_O) = D0. For D <= 12 all such subsets are
/// checked; otherwise n_random_subsets are sampled.
inline InjectivityVerdict injectivity_check(const Tensor& w, Eigen::Index min_size, int n_random_subsets, Rng& rng,
                                            double tol = 1e-10) {
    const Eigen::Index d = w.rows();
    const Eigen::Index d0 = w.cols();
    if (d < d0) throw ShapeError("injectivity_check: need D >= D0, got " + shape_str(w));
    if (min_size < 1 || min_size > d) throw ConfigError("injectivity_check: min_size must lie in [1, D]");
    InjectivityVerdict v;
    v.d0 = d0;
    v.rank_tolerance = tol;
    if (d <= 12) {
        v.exhaustive = true;
        for (std::uint32_t bits = 1; bits < (1u << d); ++bits) {
            if (static_cast<Eigen::Index>(std::popcount(bits)) < min_size) continue;
            std::vector<Eigen::Index> rows;
            for (Eigen::Index i = 0; i < d; ++i)
                if (bits & (1u << i)) rows.push_back(i);
            v.subsets.push_back(check_subset(w, std::move(rows), d0, tol));
        }
        return v;
    }
    std::vector<Eigen::Index> all(d);
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    std::uniform_int_distribution<Eigen::Index> size_dist(min_size, d);
    for (int k = 0; k < n_random_subsets; ++k) {
        std::shuffle(all.begin(), all.end(), rng);
        std::vector<Eigen::Index> rows(all.begin(), all.begin() + size_dist(rng));
        std::sort(rows.begin(), rows.end());
        v.subsets.push_back(check_subset(w, std::move(rows), d0, tol));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Welch two-sample t-test

struct LevelChangeResult {
    double mean_a = 0.0;
    double mean_b = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

/// Two-sided p-value of Student's t with df degrees of freedom:
/// P(|T| >= |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2).
inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw DomainError("student_t_two_sided_p: df must be positive");
    if (t == 0.0) return 1.0;
    if (!std::isfinite(t)) return 0.0;
    const double x = df / (df + t * t);
    return std::clamp(boost::math::ibeta(0.5 * df, 0.5, x), 0.0, 1.0);
}

inline LevelChangeResult level_change_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("level_change_test: each sample needs at least two values");
    auto moments = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, ss / static_cast<double>(v.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    if (va == 0.0 && vb == 0.0) throw DataError("level_change_test: both samples have zero variance");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double sa = va / na;
    const double sb = vb / nb;
    LevelChangeResult r;
    r.mean_a = ma;
    r.mean_b = mb;
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p_value = student_t_two_sided_p(r.t, r.df);
    return r;
}

// ---------------------------------------------------------------------------
// Identifiability probe

struct ProbeEntry {
    std::string model;
    MetricReport distance;
};

/// Energy distance between samples generated by each model and complete
/// ground truth on the selected columns, ascending (best first).
/// u feeds conditional priors; sample i uses row i mod u.rows().
inline std::vector<ProbeEntry> identifiability_probe(const std::vector<std::pair<std::string, const TrainedModel*>>& models,
                                                     const Tensor& u, const Tensor& truth_complete,
                                                     const std::vector<Eigen::Index>& columns, Eigen::Index n_generate,
                                                     int bootstrap_reps, Rng& rng) {
    auto select = [&](const Tensor& m) {
        Tensor out(m.rows(), static_cast<Eigen::Index>(columns.size()));
        for (std::size_t c = 0; c < columns.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(columns[c]);
        return out;
    };
    const Tensor truth = select(truth_complete);
    std::vector<ProbeEntry> out;
    for (const auto& [name, model] : models) {
        const Tensor gen = select(generate(*model, u, n_generate, rng));
        ProbeEntry e;
        e.model = name;
        e.distance.name = "energy_distance";
        e.distance.value = energy_distance(gen, truth);
        e.distance.std_error = energy_distance_bootstrap_se(gen, truth, bootstrap_reps, rng);
        e.distance.n_repeats = 1;
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ProbeEntry& x, const ProbeEntry& y) { return x.distance.value < y.distance.value; });
    return out;
}

}  // namespace gina
