#pragma once

// Sequential feature acquisition driven by the latent information reward
//
//   R(i | x_o) ~ E_{x_i} KL[q(z | x_i, x_o) || q(z | x_o)]
//              - E_{x_phi, x_i} KL[q(z | x_phi, x_i, x_o) || q(z | x_phi, x_o)]
//
// where x_phi is every other still-unobserved variable. Expectations are
// Monte Carlo over completions drawn from the model itself.

#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gina/distributions.hpp"
#include "gina/evalsuite.hpp"
#include "gina/models.hpp"

namespace gina {

/// Anything exposing an amortised Gaussian posterior over a latent and a
/// sampler for the unobserved part of x.
template <class M>
concept LatentPosteriorModel = requires(const M& m, const Vec& x, const Vec& r, Rng& rng) {
    { m.posterior(x, r) } -> std::convertible_to<DiagGaussian>;
    { m.sample_completion(x, r, rng) } -> std::convertible_to<Vec>;
    { m.data_dim() } -> std::convertible_to<Eigen::Index>;
};

struct AcquisitionStep {
    int step = 0;
    Eigen::Index index = 0;
    double value = 0.0;
    double reward = 0.0;
};

/// One row's acquisition progress. x holds revealed values (zeros elsewhere),
/// r the current observed set, candidates the indices still on offer.
struct AcquisitionState {
    Vec x;
    Vec r;
    std::vector<Eigen::Index> candidates;
    std::vector<AcquisitionStep> history;

    /// Start from observed set r0; every other index is a candidate.
    static AcquisitionState start(const Vec& x0, const Vec& r0) {
        if (x0.size() != r0.size()) throw ShapeError("acquisition: x and r lengths differ");
        AcquisitionState s;
        s.r = r0;
        s.x = (r0.array() != 0.0).select(x0, 0.0);
        for (Eigen::Index d = 0; d < r0.size(); ++d)
            if (r0[d] == 0.0) s.candidates.push_back(d);
        return s;
    }

    static AcquisitionState empty(Eigen::Index dim) { return start(Vec::Zero(dim), Vec::Zero(dim)); }

    [[nodiscard]] bool is_candidate(Eigen::Index i) const {
        return std::find(candidates.begin(), candidates.end(), i) != candidates.end();
    }

    void reveal(Eigen::Index i, double value, double reward) {
        auto it = std::find(candidates.begin(), candidates.end(), i);
        if (it == candidates.end()) throw DomainError("acquisition: index " + std::to_string(i) + " is not a candidate");
        candidates.erase(it);
        x[i] = value;
        r[i] = 1.0;
        history.push_back({static_cast<int>(history.size()), i, value, reward});
    }
};

template <LatentPosteriorModel M>
double info_reward(const M& model, const AcquisitionState& state, Eigen::Index i, int n_outer, int n_target,
                   Rng& rng) {
    if (n_outer < 1 || n_target < 1) throw ConfigError("info_reward: sample counts must be >= 1");
    if (state.x.size() != model.data_dim() || state.r.size() != model.data_dim())
        throw ShapeError("info_reward: state length does not match the model dimension");
    if (i < 0 || i >= model.data_dim()) throw DomainError("info_reward: index out of range");
    if (state.r[i] != 0.0) throw DomainError("info_reward: feature " + std::to_string(i) + " is already observed");

    const DiagGaussian q_o = model.posterior(state.x, state.r);
    Vec r_i = state.r;
    r_i[i] = 1.0;
    Vec r_phi = state.r;
    for (Eigen::Index c : state.candidates)
        if (c != i) r_phi[c] = 1.0;
    Vec r_all = r_phi;
    r_all[i] = 1.0;

    double first = 0.0;
    double second = 0.0;
    for (int o = 0; o < n_outer; ++o) {
        const Vec with_i = model.sample_completion(state.x, state.r, rng);
        Vec x_i = state.x;
        x_i[i] = with_i[i];
        const DiagGaussian q_io = model.posterior(x_i, r_i);
        first += kl_diag_gaussians(q_io, q_o);
        for (int t = 0; t < n_target; ++t) {
            const Vec full = model.sample_completion(x_i, r_i, rng);
            Vec x_phi_only = full;
            x_phi_only[i] = 0.0;
            const DiagGaussian q_all = model.posterior(full, r_all);
            const DiagGaussian q_phi = model.posterior(x_phi_only, r_phi);
            second += kl_diag_gaussians(q_all, q_phi);
        }
    }
    return first / n_outer - second / (static_cast<double>(n_outer) * n_target);
}

struct Selection {
    Eigen::Index index = 0;
    double reward = 0.0;
    std::vector<double> rewards;  // aligned with state.candidates
};

/// Argmax of the reward over candidates, ties to the lowest index. Every
/// candidate is scored with the same random stream (one seed drawn from rng).
template <LatentPosteriorModel M>
Selection select_next(const M& model, const AcquisitionState& state, int n_outer, int n_target, Rng& rng) {
    if (state.candidates.empty()) throw DomainError("select_next: no candidates left");
    const std::uint64_t stream = rng();
    Selection sel;
    sel.index = std::numeric_limits<Eigen::Index>::max();
    sel.reward = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c : state.candidates) {
        Rng local(stream);
        const double v = info_reward(model, state, c, n_outer, n_target, local);
        sel.rewards.push_back(v);
        if (v > sel.reward || (v == sel.reward && c < sel.index)) {
            sel.reward = v;
            sel.index = c;
        }
    }
    return sel;
}

struct HistoryLine {
    Eigen::Index row = 0;
    int step = 0;
    Eigen::Index index = 0;
    double reward = 0.0;
    double value = 0.0;
    double level_delta = std::numeric_limits<double>::quiet_NaN();  // NaN at step 0 or without levels
};

inline void to_json(nlohmann::json& j, const HistoryLine& h) {
    j = nlohmann::json{{"row", h.row}, {"step", h.step}, {"index", h.index}, {"reward", h.reward}, {"value", h.value}};
    if (std::isfinite(h.level_delta))
        j["level_delta"] = h.level_delta;
    else
        j["level_delta"] = nullptr;
}

struct AcquisitionResult {
    std::vector<HistoryLine> history;
    std::vector<double> after_correct;    // level deltas following a revealed 1
    std::vector<double> after_incorrect;  // level deltas following a revealed 0
    std::optional<LevelChangeResult> level_test;
};

struct AcquisitionConfig {
    int steps = 1;
    int n_outer = 10;
    int n_target = 10;
    std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AcquisitionConfig, steps, n_outer, n_target, seed)

/// For each row of `start` (values and mask give the initial O), pick
/// `steps` features one at a time, revealing each from `reveal`. Only entries
/// with reveal.mask = 1 are candidates. With per-column levels, consecutive
/// choices contribute level[i_t] - level[i_{t-1}] grouped by the response at
/// step t - 1 (1 = correct).
template <LatentPosteriorModel M>
AcquisitionResult run_acquisition(const M& model, const MaskedMatrix& start, const MaskedMatrix& reveal,
                                  const AcquisitionConfig& cfg, const std::vector<double>& levels = {}) {
    if (cfg.steps < 0) throw ConfigError("run_acquisition: steps must be >= 0");
    if (start.cols() != model.data_dim() || reveal.cols() != model.data_dim() || start.rows() != reveal.rows())
        throw ShapeError("run_acquisition: start/reveal shapes do not match the model");
    if (!levels.empty() && static_cast<Eigen::Index>(levels.size()) != model.data_dim())
        throw ShapeError("run_acquisition: need one level per column");
    Rng rng(cfg.seed);
    AcquisitionResult res;
    for (Eigen::Index row = 0; row < start.rows(); ++row) {
        Vec r0 = start.mask.row(row).transpose();
        AcquisitionState st = AcquisitionState::start(start.values.row(row).transpose(), r0);
        std::erase_if(st.candidates, [&](Eigen::Index c) { return reveal.mask(row, c) == 0.0; });
        if (cfg.steps > static_cast<int>(st.candidates.size()))
            throw ConfigError("run_acquisition: row " + std::to_string(row) + " has " +
                              std::to_string(st.candidates.size()) + " candidates, fewer than steps=" +
                              std::to_string(cfg.steps));
        for (int step = 0; step < cfg.steps; ++step) {
            const Selection sel = select_next(model, st, cfg.n_outer, cfg.n_target, rng);
            const double value = reveal.values(row, sel.index);
            HistoryLine line{row, step, sel.index, sel.reward, value};
            if (step > 0 && !levels.empty()) {
                const auto& prev = st.history.back();
                line.level_delta = levels[sel.index] - levels[prev.index];
                (prev.value > 0.5 ? res.after_correct : res.after_incorrect).push_back(line.level_delta);
            }
            st.reveal(sel.index, value, sel.reward);
            res.history.push_back(line);
        }
    }
    if (res.after_correct.size() >= 2 && res.after_incorrect.size() >= 2) {
        try {
            res.level_test = level_change_test(res.after_correct, res.after_incorrect);
        } catch (const DataError&) {
        }
    }
    return res;
}

}  // namespace gina
