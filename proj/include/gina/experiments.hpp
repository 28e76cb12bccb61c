#pragma once

// Synthetic benchmark runs: train several model kinds on one masked
// dataset, then score generation against fresh complete draws from the
// generator and point imputation against the hidden true values.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "gina/evalsuite.hpp"
#include "gina/models.hpp"
#include "gina/synthdata.hpp"

namespace gina {

struct SynthRunConfig {
    SynthDataset dataset = SynthDataset::A;
    Eigen::Index n = 2000;
    std::uint64_t seed = 1;
    std::vector<ModelKind> kinds{ModelKind::PVAE, ModelKind::NotMIWAE, ModelKind::GINA};
    TrainConfig train{1e-3, 100, 2000, 0};
    Eigen::Index n_generate = 2000;
    Eigen::Index n_heldout = 2000;
    int bootstrap_reps = 20;
    int impute_samples = 100;
    std::vector<Eigen::Index> probe_columns{1, 2};
};

struct SynthModelResult {
    ModelKind kind = ModelKind::GINA;
    double energy = 0.0;
    double energy_se = 0.0;
    double impute_mse = 0.0;  // generator scale, masked entries only
    double final_bound = 0.0;
    Tensor generated;          // n_generate x D, standardised scale
};

struct SynthRunResult {
    SynthRunConfig config;
    std::vector<SynthModelResult> models;
    double observed_fraction_x2 = 0.0;
    double observed_fraction_x3 = 0.0;

    [[nodiscard]] const SynthModelResult& get(ModelKind k) const {
        for (const auto& m : models)
            if (m.kind == k) return m;
        throw ConfigError("run has no result for model kind " + to_string(k));
    }
};

inline std::uint64_t heldout_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ull + 0x5EEDull; }

inline SynthRunResult run_synthetic(const SynthRunConfig& cfg) {
    const auto set = make_synthetic(SynthSpec::for_dataset(cfg.dataset, cfg.n, cfg.seed));
    const MaskedMatrix data = to_masked(set);
    const Tensor truth = held_out_complete(set, cfg.n_heldout, heldout_seed(cfg.seed));
    const Tensor truth_raw = set.transform.invert(set.x);

    SynthRunResult res;
    res.config = cfg;
    res.observed_fraction_x2 = set.mask.col(1).mean();
    res.observed_fraction_x3 = set.mask.col(2).mean();
    for (std::size_t m = 0; m < cfg.kinds.size(); ++m) {
        const ModelKind kind = cfg.kinds[m];
        const ModelSpec spec = ModelSpec::synthetic(kind, kSynthDim, 1);
        TrainConfig hyper = cfg.train;
        hyper.seed = cfg.seed * 1000 + m + 1;
        const TrainedModel model = train(data, spec, hyper);

        Rng rng(hyper.seed + 7);
        SynthModelResult r;
        r.kind = kind;
        r.final_bound = model.trace.empty() ? 0.0 : model.trace.back();
        r.generated = generate(model, data.aux, cfg.n_generate, rng);
        Tensor gen_cols(r.generated.rows(), static_cast<Eigen::Index>(cfg.probe_columns.size()));
        Tensor truth_cols(truth.rows(), gen_cols.cols());
        for (std::size_t c = 0; c < cfg.probe_columns.size(); ++c) {
            gen_cols.col(static_cast<Eigen::Index>(c)) = r.generated.col(cfg.probe_columns[c]);
            truth_cols.col(static_cast<Eigen::Index>(c)) = truth.col(cfg.probe_columns[c]);
        }
        r.energy = energy_distance(gen_cols, truth_cols);
        r.energy_se = energy_distance_bootstrap_se(gen_cols, truth_cols, cfg.bootstrap_reps, rng);

        const Tensor point = set.transform.invert(impute_points(model, data, cfg.impute_samples, rng));
        const Tensor hidden = (1.0 - set.mask.array()).matrix();
        r.impute_mse = mse(point, truth_raw, hidden).value;
        res.models.push_back(std::move(r));
    }
    return res;
}

/// Worker count from GINA_NUM_THREADS (default 1, at least 1).
inline unsigned num_threads_from_env() {
    const char* v = std::getenv("GINA_NUM_THREADS");
    if (v == nullptr || *v == '\0') return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1) throw ConfigError("GINA_NUM_THREADS must be a positive integer");
    return static_cast<unsigned>(n);
}

/// Run fn(i) for i in [0, count) on up to `threads` workers; the first
/// exception is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace gina
