#pragma once

// Three-variable synthetic MNAR benchmarks.
//
//   Z1, Z2, Z3 ~ N(0, 1)
//   X1 = w . Z + e1
//   X2 = f_1(X1, Z) + e2
//   X3 = f_2(X1, X2, Z) + e3
//
// with f(v) = a * tanh(b * (p . v)) + c * (q . v) and Gaussian noise. X1 is
// always observed; X2 and X3 are masked by self-masking (missing iff X_i > 0)
// or latent-dependent self-masking (missing iff g_i(X_i, Z) > 0). Masks are
// applied on the generator scale; standardisation happens afterwards using
// observed entries only.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "gina/dataio.hpp"
#include "gina/distributions.hpp"

namespace gina {

enum class SynthDataset { A, B, C };
enum class MaskKind { SelfMask, LatentSelfMask };

NLOHMANN_JSON_SERIALIZE_ENUM(SynthDataset, {{SynthDataset::A, "A"}, {SynthDataset::B, "B"}, {SynthDataset::C, "C"}})
NLOHMANN_JSON_SERIALIZE_ENUM(MaskKind, {{MaskKind::SelfMask, "self"}, {MaskKind::LatentSelfMask, "latent_self"}})

inline SynthDataset parse_dataset(const std::string& s) {
    if (s == "A" || s == "a") return SynthDataset::A;
    if (s == "B" || s == "b") return SynthDataset::B;
    if (s == "C" || s == "c") return SynthDataset::C;
    throw ConfigError("unknown synthetic dataset '" + s + "' (expected A, B or C)");
}

inline constexpr int kSynthDim = 3;

/// f(v) = a * tanh(b * (p . v)) + c * (q . v)
struct Nonlinearity {
    double a = 0.0;
    double b = 1.0;
    double c = 1.0;
    std::vector<double> p;
    std::vector<double> q;

    [[nodiscard]] double operator()(const std::vector<double>& v) const {
        double lp = 0.0;
        double lq = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            lp += p[i] * v[i];
            lq += q[i] * v[i];
        }
        return a * std::tanh(b * lp) + c * lq;
    }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Nonlinearity, a, b, c, p, q)

/// Everything needed to reproduce a generated dataset.
struct GeneratorParams {
    std::array<double, 3> w{};  // X1 = w . Z + e1
    Nonlinearity f1;            // inputs (X1, Z1, Z2, Z3)
    Nonlinearity f2;            // inputs (X1, X2, Z1, Z2, Z3)
    double noise_var = 0.01;
    // Latent self-masking coefficients for X2 and X3 over (X_i, Z1, Z2, Z3).
    std::array<std::array<double, 4>, 2> mask_coeffs{};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GeneratorParams, w, f1, f2, noise_var, mask_coeffs)

struct SynthSpec {
    SynthDataset dataset = SynthDataset::A;
    Eigen::Index n = 2000;
    std::uint64_t seed = 0;  // sample draws
    double noise_var = 0.01;
    MaskKind mask = MaskKind::SelfMask;

    /// Conventional mechanism: A self-masks, B and C use latent self-masking.
    static SynthSpec for_dataset(SynthDataset d, Eigen::Index n, std::uint64_t seed) {
        SynthSpec s;
        s.dataset = d;
        s.n = n;
        s.seed = seed;
        s.mask = d == SynthDataset::A ? MaskKind::SelfMask : MaskKind::LatentSelfMask;
        return s;
    }
};

/// Column-wise affine standardisation fitted on observed entries.
struct Standardizer {
    Vec mean;
    Vec sd;

    static Standardizer fit(const Tensor& values, const Tensor& mask) {
        Standardizer s;
        s.mean = Vec::Zero(values.cols());
        s.sd = Vec::Zero(values.cols());
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            double sum = 0.0;
            double count = 0.0;
            for (Eigen::Index i = 0; i < values.rows(); ++i) {
                if (mask(i, j) == 0.0) continue;
                sum += values(i, j);
                count += 1.0;
            }
            if (count < 2.0)
                throw DataError("standardize: column " + std::to_string(j) + " has fewer than two observed entries");
            const double m = sum / count;
            double ss = 0.0;
            for (Eigen::Index i = 0; i < values.rows(); ++i)
                if (mask(i, j) != 0.0) ss += (values(i, j) - m) * (values(i, j) - m);
            const double sd = std::sqrt(ss / count);
            if (!(sd > 1e-12 * std::max(1.0, std::abs(m))))
                throw DataError("standardize: column " + std::to_string(j) + " has zero variance");
            s.mean[j] = m;
            s.sd[j] = sd;
        }
        return s;
    }

    [[nodiscard]] Tensor apply(const Tensor& x) const {
        return ((x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
    }

    [[nodiscard]] Tensor invert(const Tensor& y) const {
        return ((y.array().rowwise() * sd.transpose().array()).rowwise() + mean.transpose().array()).matrix();
    }
};
inline void to_json(nlohmann::json& j, const Standardizer& s) {
    j = nlohmann::json{{"mean", std::vector<double>(s.mean.begin(), s.mean.end())},
                       {"sd", std::vector<double>(s.sd.begin(), s.sd.end())}};
}

inline void from_json(const nlohmann::json& j, Standardizer& s) {
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto d = j.at("sd").get<std::vector<double>>();
    s.mean = Eigen::Map<const Vec>(m.data(), static_cast<Eigen::Index>(m.size()));
    s.sd = Eigen::Map<const Vec>(d.data(), static_cast<Eigen::Index>(d.size()));
}

struct CompleteSynthSet {
    Tensor x;         // n x 3, generator scale until standardize() runs
    Tensor mask;      // n x 3
    Tensor z;         // n x 3 latent draws
    GeneratorParams params;
    SynthSpec spec;
    bool standardized = false;
    Standardizer transform;  // identity until standardize() runs
};

namespace detail {

inline std::vector<double> unit_gaussian_vector(std::size_t n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    double norm = 0.0;
    for (auto& x : v) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

inline Nonlinearity draw_nonlinearity(std::size_t inputs, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Nonlinearity f;
    f.a = (unif(rng) < 0.5 ? -1.0 : 1.0) * (1.0 + unif(rng));
    f.b = 1.5 + 1.5 * unif(rng);
    f.c = 2.0 * unif(rng) - 1.0;
    f.p = unit_gaussian_vector(inputs, rng);
    f.q = unit_gaussian_vector(inputs, rng);
    return f;
}

inline std::uint64_t dataset_param_seed(SynthDataset d) {
    switch (d) {
        case SynthDataset::A: return 0xA11CEu;
        case SynthDataset::B: return 0xB0B5u;
        case SynthDataset::C: return 0xC0FFEEu;
    }
    return 0;
}

}  // namespace detail

/// Fixed generator parameters of a named dataset (mask coefficients are
/// filled in by apply_latent_self_mask's rejection step).
inline GeneratorParams dataset_params(SynthDataset d, double noise_var = 0.01) {
    Rng rng(detail::dataset_param_seed(d));
    GeneratorParams p;
    auto w = detail::unit_gaussian_vector(3, rng);
    std::copy(w.begin(), w.end(), p.w.begin());
    p.f1 = detail::draw_nonlinearity(4, rng);
    p.f2 = detail::draw_nonlinearity(5, rng);
    p.noise_var = noise_var;
    return p;
}

/// Draw n complete rows from explicit generator parameters; mask all ones.
inline CompleteSynthSet sample_complete(const GeneratorParams& params, Eigen::Index n, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("synthetic sample count must be positive");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise_sd = std::sqrt(params.noise_var);
    CompleteSynthSet s;
    s.params = params;
    s.x.resize(n, kSynthDim);
    s.z.resize(n, kSynthDim);
    s.mask = Tensor::Ones(n, kSynthDim);
    s.transform.mean = Vec::Zero(kSynthDim);
    s.transform.sd = Vec::Ones(kSynthDim);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z1 = normal(rng);
        const double z2 = normal(rng);
        const double z3 = normal(rng);
        const double e1 = noise_sd * normal(rng);
        const double e2 = noise_sd * normal(rng);
        const double e3 = noise_sd * normal(rng);
        const double x1 = params.w[0] * z1 + params.w[1] * z2 + params.w[2] * z3 + e1;
        const double x2 = params.f1({x1, z1, z2, z3}) + e2;
        const double x3 = params.f2({x1, x2, z1, z2, z3}) + e3;
        s.z.row(i) << z1, z2, z3;
        s.x.row(i) << x1, x2, x3;
    }
    return s;
}

inline CompleteSynthSet gen_complete(const SynthSpec& spec) {
    if (spec.n <= 0) throw ConfigError("synthetic sample count must be positive, got " + std::to_string(spec.n));
    auto s = sample_complete(dataset_params(spec.dataset, spec.noise_var), spec.n, spec.seed);
    s.spec = spec;
    return s;
}

/// X2, X3 missing iff their value is > 0; X1 always observed.
inline CompleteSynthSet apply_self_mask(CompleteSynthSet set) {
    for (Eigen::Index i = 0; i < set.x.rows(); ++i) {
        set.mask(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < kSynthDim; ++j) set.mask(i, j) = set.x(i, j) > 0.0 ? 0.0 : 1.0;
    }
    return set;
}

/// X_i missing iff g_i(X_i, Z) = c . (X_i, Z1, Z2, Z3) > 0; ties observed.
inline CompleteSynthSet apply_latent_self_mask(CompleteSynthSet set, const std::array<std::array<double, 4>, 2>& coeffs) {
    set.params.mask_coeffs = coeffs;
    for (Eigen::Index i = 0; i < set.x.rows(); ++i) {
        set.mask(i, 0) = 1.0;
        for (int m = 0; m < 2; ++m) {
            const Eigen::Index j = m + 1;
            const auto& c = coeffs[m];
            const double g = c[0] * set.x(i, j) + c[1] * set.z(i, 0) + c[2] * set.z(i, 1) + c[3] * set.z(i, 2);
            set.mask(i, j) = g > 0.0 ? 0.0 : 1.0;
        }
    }
    return set;
}

/// Random coefficients, redrawn until each masked column's observed fraction
/// lies in (0.05, 0.95) on this sample.
inline std::array<std::array<double, 4>, 2> draw_latent_mask_coeffs(const CompleteSynthSet& set, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::array<std::array<double, 4>, 2> coeffs{};
    for (int m = 0; m < 2; ++m) {
        const Eigen::Index j = m + 1;
        for (int attempt = 0;; ++attempt) {
            if (attempt > 1000) throw DataError("latent mask: could not find non-degenerate coefficients");
            for (auto& c : coeffs[m]) c = normal(rng);
            double observed = 0.0;
            for (Eigen::Index i = 0; i < set.x.rows(); ++i) {
                const auto& c = coeffs[m];
                const double g = c[0] * set.x(i, j) + c[1] * set.z(i, 0) + c[2] * set.z(i, 1) + c[3] * set.z(i, 2);
                if (g <= 0.0) observed += 1.0;
            }
            const double frac = observed / static_cast<double>(set.x.rows());
            if (frac > 0.05 && frac < 0.95) break;
        }
    }
    return coeffs;
}

/// Fit the transform on observed entries and apply it to the complete values.
inline CompleteSynthSet standardize(CompleteSynthSet set) {
    if (set.standardized) return set;
    set.transform = Standardizer::fit(set.x, set.mask);
    set.x = set.transform.apply(set.x);
    set.standardized = true;
    return set;
}

/// Full pipeline: sample, mask according to spec.mask, standardise.
/// Latent-mask coefficients are fixed per dataset (drawn from the dataset's
/// parameter stream against a reference sample), so every seed of the same
/// dataset shares one missingness mechanism.
inline CompleteSynthSet make_synthetic(const SynthSpec& spec) {
    auto set = gen_complete(spec);
    if (spec.mask == MaskKind::SelfMask) {
        set = apply_self_mask(std::move(set));
    } else {
        const auto ref = sample_complete(set.params, 5000, detail::dataset_param_seed(spec.dataset) + 1);
        Rng rng(detail::dataset_param_seed(spec.dataset) + 2);
        set = apply_latent_self_mask(std::move(set), draw_latent_mask_coeffs(ref, rng));
    }
    return standardize(std::move(set));
}

/// Masked training view: the three columns plus X1 repeated as the
/// fully observed auxiliary column aux_x1.
inline MaskedMatrix to_masked(const CompleteSynthSet& set) {
    MaskedMatrix m;
    m.values = (set.mask.array() != 0.0).select(set.x, 0.0);
    m.mask = set.mask;
    m.aux = set.x.leftCols(1);
    m.names = {"x1", "x2", "x3"};
    m.aux_names = {"aux_x1"};
    m.kinds.assign(kSynthDim, ColumnKind::Continuous);
    return m;
}

/// Complete view (all entries observed), no aux.
inline MaskedMatrix to_complete(const CompleteSynthSet& set) {
    MaskedMatrix m = MaskedMatrix::complete(set.x);
    return m;
}

/// Fresh complete rows from the same generator, mapped with `set`'s transform.
inline Tensor held_out_complete(const CompleteSynthSet& set, Eigen::Index n, std::uint64_t seed) {
    auto fresh = sample_complete(set.params, n, seed);
    return set.transform.apply(fresh.x);
}

inline nlohmann::json generator_record(const CompleteSynthSet& set) {
    nlohmann::json j;
    j["dataset"] = set.spec.dataset;
    j["n"] = set.spec.n;
    j["seed"] = set.spec.seed;
    j["mask"] = set.spec.mask;
    j["params"] = set.params;
    j["standardizer"] = set.transform;
    return j;
}

}  // namespace gina
