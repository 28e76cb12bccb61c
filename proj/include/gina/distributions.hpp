#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "gina/autodiff.hpp"

namespace gina {

using Rng = std::mt19937_64;
using Vec = Eigen::VectorXd;

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kProbEps = 1e-7;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Gaussian with diagonal covariance, parameterised by mean and log-variance.
struct DiagGaussian {
    Vec mean;
    Vec log_var;

    DiagGaussian() = default;
    DiagGaussian(Vec mu, Vec lv) : mean(std::move(mu)), log_var(std::move(lv)) {
        if (mean.size() != log_var.size())
            throw ShapeError("DiagGaussian: mean has " + std::to_string(mean.size()) + " entries, log_var " +
                             std::to_string(log_var.size()));
        log_var = log_var.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
    }

    static DiagGaussian standard(Eigen::Index dim) { return {Vec::Zero(dim), Vec::Zero(dim)}; }

    [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
    [[nodiscard]] Vec variance() const { return log_var.array().exp(); }
};

/// Independent Bernoulli probabilities, clamped into [eps, 1 - eps].
struct BernoulliVec {
    Vec probs;

    BernoulliVec() = default;
    explicit BernoulliVec(Vec p) : probs(p.cwiseMax(kProbEps).cwiseMin(1.0 - kProbEps)) {}

    [[nodiscard]] Eigen::Index dim() const { return probs.size(); }
};

inline double gaussian_logpdf(const Vec& x, const DiagGaussian& g) {
    if (x.size() != g.dim())
        throw ShapeError("gaussian_logpdf: x has " + std::to_string(x.size()) + " entries, distribution " +
                         std::to_string(g.dim()));
    double acc = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
        const double diff = x[d] - g.mean[d];
        acc += -kHalfLog2Pi - 0.5 * g.log_var[d] - 0.5 * diff * diff * std::exp(-g.log_var[d]);
    }
    return acc;
}

inline double bernoulli_logpmf(const Vec& r, const BernoulliVec& b) {
    if (r.size() != b.dim())
        throw ShapeError("bernoulli_logpmf: r has " + std::to_string(r.size()) + " entries, distribution " +
                         std::to_string(b.dim()));
    double acc = 0.0;
    for (Eigen::Index d = 0; d < r.size(); ++d) {
        if (r[d] != 0.0 && r[d] != 1.0)
            throw DomainError("bernoulli_logpmf: non-binary entry " + std::to_string(r[d]) + " at index " +
                              std::to_string(d));
        acc += r[d] == 1.0 ? std::log(b.probs[d]) : std::log1p(-b.probs[d]);
    }
    return acc;
}

/// KL(q || p) in closed form.
inline double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p) {
    if (q.dim() != p.dim())
        throw ShapeError("kl_diag_gaussians: dimensions " + std::to_string(q.dim()) + " and " +
                         std::to_string(p.dim()));
    double acc = 0.0;
    for (Eigen::Index d = 0; d < q.dim(); ++d) {
        const double vq = std::exp(q.log_var[d]);
        const double inv_vp = std::exp(-p.log_var[d]);
        const double dm = q.mean[d] - p.mean[d];
        acc += 0.5 * ((vq + dm * dm) * inv_vp - 1.0 + p.log_var[d] - q.log_var[d]);
    }
    return acc;
}

inline Vec standard_normal(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
    return out;
}

inline Tensor standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
    return out;
}

/// z = mean + exp(log_var / 2) * eta for a given noise vector.
inline Vec reparameterize(const DiagGaussian& g, const Vec& eta) {
    if (eta.size() != g.dim()) throw ShapeError("reparameterize: noise dimension mismatch");
    return g.mean.array() + (0.5 * g.log_var.array()).exp() * eta.array();
}

inline Vec sample(const DiagGaussian& g, Rng& rng) { return reparameterize(g, standard_normal(g.dim(), rng)); }

// ---------------------------------------------------------------------------
// Tape versions. All operate row-wise on batches: each row is one sample.

/// Reparameterised sample recorded on the tape so gradients reach mean and
/// log_var. eta is pre-drawn standard-normal noise of the same shape.
inline Var rsample(Var mean, Var log_var, Var eta) { return mean + exp(scale(log_var, 0.5)) * eta; }

inline Var rsample(Var mean, Var log_var, Rng& rng) {
    Tape& t = *mean.tape();
    return rsample(mean, log_var, t.constant(standard_normal(mean.rows(), mean.cols(), rng)));
}

/// Per-entry Gaussian log density; same shape as x.
inline Var gaussian_logpdf_entries(Var x, Var mean, Var log_var) {
    Var diff2 = square(x - mean);
    return shift(scale(log_var, -0.5), -kHalfLog2Pi) - scale(diff2 * exp(-log_var), 0.5);
}

/// Row-wise Gaussian log density with a fixed scalar log standard deviation.
inline Var gaussian_logpdf_entries_fixed(Var x, Var mean, double log_sigma) {
    const double inv_var = std::exp(-2.0 * log_sigma);
    return shift(scale(square(x - mean), -0.5 * inv_var), -kHalfLog2Pi - log_sigma);
}

inline Var gaussian_logpdf_rows(Var x, Var mean, Var log_var) {
    return row_sum(gaussian_logpdf_entries(x, mean, log_var));
}

/// Per-entry Bernoulli log mass of binary-or-soft targets under clamped
/// probabilities: t ln p + (1 - t) ln(1 - p).
inline Var bernoulli_logpmf_entries(Var target, Var probs) {
    Var p = clamp(probs, kProbEps, 1.0 - kProbEps);
    return target * log(p) + (1.0 - target) * log(1.0 - p);
}

// ---------------------------------------------------------------------------
// Conditionally factorial Gaussian prior p(Z | U): natural parameters affine
// in the auxiliary variables, expressed here as mean and log-variance.

struct CondPriorParams {
    Tensor w_mean;    // A x H
    Tensor b_mean;    // 1 x H
    Tensor w_logvar;  // A x H
    Tensor b_logvar;  // 1 x H

    static CondPriorParams zeros(Eigen::Index aux_dim, Eigen::Index latent_dim) {
        return {Tensor::Zero(aux_dim, latent_dim), Tensor::Zero(1, latent_dim), Tensor::Zero(aux_dim, latent_dim),
                Tensor::Zero(1, latent_dim)};
    }
};

inline DiagGaussian cond_prior(const Vec& u, const CondPriorParams& params) {
    if (u.size() != params.w_mean.rows() || u.size() != params.w_logvar.rows())
        throw ShapeError("cond_prior: auxiliary vector has " + std::to_string(u.size()) + " entries, prior expects " +
                         std::to_string(params.w_mean.rows()));
    Vec mu = params.w_mean.transpose() * u + params.b_mean.row(0).transpose();
    Vec lv = params.w_logvar.transpose() * u + params.b_logvar.row(0).transpose();
    return {std::move(mu), std::move(lv)};
}

}  // namespace gina
