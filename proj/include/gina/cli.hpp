#pragma once

// Command implementations behind the `gina` executable. Each command takes
// the effective run configuration (a JSON object after flag overrides),
// writes its artifacts into cfg["out"] and returns a short JSON summary.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gina/active.hpp"
#include "gina/dataio.hpp"
#include "gina/evalsuite.hpp"
#include "gina/experiments.hpp"
#include "gina/model_io.hpp"
#include "gina/models.hpp"
#include "gina/synthdata.hpp"

namespace gina::cli {

using nlohmann::json;

inline constexpr const char* kToolVersion = "gina 0.1.0";

enum ExitCode : int { kOk = 0, kConfigExit = 2, kDataExit = 3, kNumericExit = 4 };

/// Flag values that override the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> dataset;
    std::optional<std::string> model_kind;
    std::optional<int> epochs;
    std::optional<int> k;
    std::optional<double> beta;
    std::optional<std::string> aux;
    std::optional<std::string> data;
    std::optional<std::string> model_path;
    std::optional<std::string> truth;
    std::optional<std::string> pred;
};

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
}

inline json apply_overrides(json cfg, const Overrides& o) {
    if (!cfg.is_object()) cfg = json::object();
    if (o.seed) cfg["seed"] = *o.seed;
    if (o.out) cfg["out"] = *o.out;
    if (o.dataset) cfg["synth"]["dataset"] = *o.dataset;
    if (o.model_kind) cfg["model"]["kind"] = *o.model_kind;
    if (o.epochs) cfg["train"]["epochs"] = *o.epochs;
    if (o.k) cfg["model"]["importance_samples"] = *o.k;
    if (o.beta) cfg["model"]["beta"] = *o.beta;
    if (o.aux) cfg["model"]["aux_source"] = *o.aux;
    if (o.data) cfg["data"] = *o.data;
    if (o.model_path) cfg["model_path"] = *o.model_path;
    if (o.truth) cfg["truth"] = *o.truth;
    if (o.pred) cfg["pred"] = *o.pred;
    return cfg;
}

namespace detail {

/// defaults overlaid with cfg[key]; unknown keys are kept.
inline json section(const json& cfg, const char* key, json defaults) {
    if (cfg.contains(key)) {
        if (!cfg.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
        defaults.merge_patch(cfg.at(key));
    }
    return defaults;
}

inline std::string required_path(const json& cfg, const char* key) {
    if (!cfg.contains(key) || !cfg.at(key).is_string() || cfg.at(key).get<std::string>().empty())
        throw ConfigError(std::string("missing required setting '") + key + "'");
    return cfg.at(key).get<std::string>();
}

inline std::uint64_t seed_of(const json& cfg) {
    if (!cfg.contains("seed")) return 0;
    if (!cfg.at("seed").is_number_integer()) throw ConfigError("seed must be an integer");
    if (cfg.at("seed").is_number_unsigned()) return cfg.at("seed").get<std::uint64_t>();
    const auto s = cfg.at("seed").get<std::int64_t>();
    if (s < 0) throw ConfigError("seed must be non-negative");
    return static_cast<std::uint64_t>(s);
}

inline std::filesystem::path out_dir(const json& cfg) {
    const std::filesystem::path dir = required_path(cfg, "out");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw DataError("cannot create output directory '" + dir.string() + "'");
    return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw DataError("write to '" + p.string() + "' failed");
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline void echo_config(const std::filesystem::path& dir, const std::string& command, const json& effective) {
    write_json(dir / "effective_config.json",
               json{{"tool_version", kToolVersion}, {"command", command}, {"config", effective}});
}

template <class T>
T get_as(const json& j, const char* what) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid ") + what + ": " + e.what());
    }
}

inline std::optional<RatingScale> rating_scale(const json& cfg) {
    if (!cfg.contains("ratings")) return std::nullopt;
    const auto& r = cfg.at("ratings");
    RatingScale s{r.value("lo", 0.0), r.value("hi", 1.0)};
    if (!(s.hi > s.lo)) throw ConfigError("ratings: need hi > lo");
    return s;
}

/// Load the dataset named by cfg["data"], rescaled when a ratings section is present.
inline MaskedMatrix load_data(const json& cfg, const char* key = "data") {
    MaskedMatrix m = load_csv(required_path(cfg, key));
    if (auto s = rating_scale(cfg)) m = rescale_ratings(m, s->lo, s->hi).first;
    return m;
}

inline ModelSpec preset_spec(const std::string& preset, ModelKind kind, int d, int a) {
    if (preset == "synthetic") return ModelSpec::synthetic(kind, d, a);
    if (preset == "ratings") return ModelSpec::ratings(kind, d, a);
    if (preset == "binary") return ModelSpec::binary(kind, d, a);
    throw ConfigError("unknown model preset '" + preset + "' (expected synthetic, ratings or binary)");
}

/// Preset for the data shape, then every explicit key of cfg["model"] on top.
inline ModelSpec resolve_spec(const json& model_cfg, const MaskedMatrix& data) {
    const auto preset = model_cfg.value("preset", std::string("synthetic"));
    const ModelKind kind = parse_model_kind(model_cfg.value("kind", std::string("gina")));
    AuxSource aux = AuxSource::Metadata;
    if (model_cfg.contains("aux_source")) {
        const auto s = model_cfg.at("aux_source").get<std::string>();
        if (s == "mask")
            aux = AuxSource::Mask;
        else if (s != "metadata")
            throw ConfigError("aux must be 'metadata' or 'mask', got '" + s + "'");
    }
    const int d = static_cast<int>(data.cols());
    const int a = aux == AuxSource::Mask ? d : static_cast<int>(data.aux_cols());
    ModelSpec spec = preset_spec(preset, kind, d, a);
    spec.aux_source = aux;
    json patched = spec;
    json extra = model_cfg;
    extra.erase("preset");
    extra.erase("kind");
    extra.erase("aux_source");
    patched.merge_patch(extra);
    spec = get_as<ModelSpec>(patched, "model settings");
    spec.data_dim = d;
    spec.aux_dim = a;
    spec.validate();
    return spec;
}

inline MaskedMatrix with_values(const MaskedMatrix& like, Tensor values) {
    MaskedMatrix m = like;
    m.values = std::move(values);
    m.mask = Tensor::Ones(m.rows(), m.cols());
    return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline json cmd_generate(const json& cfg_in) {
    json cfg = cfg_in;
    const std::uint64_t seed = detail::seed_of(cfg);
    json synth = detail::section(cfg, "synth", {{"dataset", "A"}, {"n", 2000}, {"noise_var", 0.01}});
    const SynthDataset ds = parse_dataset(synth.at("dataset").get<std::string>());
    if (!synth.contains("mask")) synth["mask"] = ds == SynthDataset::A ? MaskKind::SelfMask : MaskKind::LatentSelfMask;
    const auto n = synth.at("n").get<std::int64_t>();
    if (n <= 0) throw ConfigError("synth.n must be positive, got " + std::to_string(n));
    SynthSpec spec = SynthSpec::for_dataset(ds, n, seed);
    spec.noise_var = synth.at("noise_var").get<double>();
    if (!(spec.noise_var > 0.0)) throw ConfigError("synth.noise_var must be positive");
    spec.mask = detail::get_as<MaskKind>(synth.at("mask"), "synth.mask");
    cfg["synth"] = synth;
    cfg["seed"] = seed;

    const auto dir = detail::out_dir(cfg);
    const CompleteSynthSet set = make_synthetic(spec);
    save_csv((dir / "data.csv").string(), to_masked(set));
    MaskedMatrix complete = to_masked(set);
    complete.values = set.x;
    complete.mask = Tensor::Ones(set.x.rows(), set.x.cols());
    save_csv((dir / "complete.csv").string(), complete);
    detail::write_json(dir / "generator.json", generator_record(set));
    detail::echo_config(dir, "generate", cfg);
    return json{{"rows", n},
                {"observed_fraction", {set.mask.col(0).mean(), set.mask.col(1).mean(), set.mask.col(2).mean()}}};
}

inline json cmd_train(const json& cfg_in) {
    json cfg = cfg_in;
    const std::uint64_t seed = detail::seed_of(cfg);
    const MaskedMatrix data = detail::load_data(cfg);
    const json model_cfg = detail::section(cfg, "model", json::object());
    const ModelSpec spec = detail::resolve_spec(model_cfg, data);
    json train_cfg = detail::section(cfg, "train", TrainConfig{});
    train_cfg["seed"] = seed;
    const auto hyper = detail::get_as<TrainConfig>(train_cfg, "train settings");
    cfg["model"] = spec;
    cfg["model"]["preset"] = model_cfg.value("preset", std::string("synthetic"));
    cfg["train"] = train_cfg;
    cfg["seed"] = seed;

    const auto dir = detail::out_dir(cfg);
    const TrainedModel model = train(data, spec, hyper);
    save_model(model, (dir / "model.json").string());
    std::string trace = "epoch,bound\n";
    for (std::size_t e = 0; e < model.trace.size(); ++e)
        trace += std::to_string(e) + "," + format_double(model.trace[e]) + "\n";
    detail::write_text(dir / "trace.csv", trace);
    detail::echo_config(dir, "train", cfg);
    return json{{"epochs", model.trace.size()}, {"final_bound", model.trace.empty() ? 0.0 : model.trace.back()}};
}

inline json cmd_impute(const json& cfg_in) {
    json cfg = cfg_in;
    const std::uint64_t seed = detail::seed_of(cfg);
    const TrainedModel model = load_model(detail::required_path(cfg, "model_path"));
    const MaskedMatrix raw = load_csv(detail::required_path(cfg, "data"));
    const auto scale = detail::rating_scale(cfg);
    const MaskedMatrix data = scale ? rescale_ratings(raw, scale->lo, scale->hi).first : raw;
    if (data.cols() != model.spec.data_dim)
        throw ShapeError("impute: data has " + std::to_string(data.cols()) + " columns, model expects " +
                         std::to_string(model.spec.data_dim));
    const json imp = detail::section(cfg, "impute", {{"samples", 100}, {"draws", 0}});
    const int samples = imp.at("samples").get<int>();
    const int draws = imp.at("draws").get<int>();
    if (samples < 1 || draws < 0) throw ConfigError("impute: need samples >= 1 and draws >= 0");
    cfg["impute"] = imp;
    cfg["seed"] = seed;

    const auto dir = detail::out_dir(cfg);
    auto emit = [&](const std::filesystem::path& p, Tensor filled) {
        if (scale) filled = scale->inverse(filled);
        save_csv(p.string(), detail::with_values(raw, (raw.mask.array() != 0.0).select(raw.values, filled)));
    };
    Rng rng(seed);
    emit(dir / "imputed.csv", impute_points(model, data, samples, rng));
    for (int k = 0; k < draws; ++k)
        emit(dir / ("imputed_draw_" + std::to_string(k) + ".csv"), impute_single_draw(model, data, rng));
    detail::echo_config(dir, "impute", cfg);
    return json{{"rows", data.rows()}, {"imputed_entries", data.rows() * data.cols() - data.observed_count()}};
}

/// Scores predictions against truth on entries observed in truth and, when
/// `data` is given, unobserved there. Predictions come from cfg["pred"] or
/// from imputing `data` with `model_path`.
inline json cmd_evaluate(const json& cfg_in) {
    json cfg = cfg_in;
    const std::uint64_t seed = detail::seed_of(cfg);
    const MaskedMatrix truth = load_csv(detail::required_path(cfg, "truth"));
    std::optional<MaskedMatrix> data;
    if (cfg.contains("data")) data = load_csv(detail::required_path(cfg, "data"));
    const json ev = detail::section(cfg, "evaluate", {{"samples", 100}});
    cfg["evaluate"] = ev;
    cfg["seed"] = seed;

    Tensor pred;
    if (cfg.contains("pred")) {
        const MaskedMatrix p = load_csv(detail::required_path(cfg, "pred"));
        if (p.rows() != truth.rows() || p.cols() != truth.cols())
            throw ShapeError("evaluate: pred " + shape_str(p.values) + " and truth " + shape_str(truth.values) +
                             " differ in shape");
        pred = p.values;
        const Tensor need = truth.mask.array() * (1.0 - p.mask.array());
        if (need.sum() > 0.0) throw DataError("evaluate: pred leaves scored entries empty");
    } else {
        if (!data) throw ConfigError("evaluate: give either 'pred' or both 'model_path' and 'data'");
        const TrainedModel model = load_model(detail::required_path(cfg, "model_path"));
        MaskedMatrix input = *data;
        const auto scale = detail::rating_scale(cfg);
        if (scale) input = rescale_ratings(input, scale->lo, scale->hi).first;
        if (input.cols() != model.spec.data_dim) throw ShapeError("evaluate: data dimension does not match the model");
        Rng rng(seed);
        pred = impute_points(model, input, ev.at("samples").get<int>(), rng);
        if (scale) pred = scale->inverse(pred);
    }
    if (data && (data->rows() != truth.rows() || data->cols() != truth.cols()))
        throw ShapeError("evaluate: data and truth differ in shape");
    Tensor scored = truth.mask;
    if (data) scored = (truth.mask.array() * (1.0 - data->mask.array())).matrix();

    const auto dir = detail::out_dir(cfg);
    const Tensor truth_vals = truth.zero_filled();
    const Tensor pred_vals = (scored.array() != 0.0).select(pred, 0.0);
    json reports = json::array();
    reports.push_back(mse(pred_vals, truth_vals, scored));
    reports.push_back(debiased_mse(pred_vals, truth_vals, scored));
    detail::write_json(dir / "metrics.json", reports);
    detail::echo_config(dir, "evaluate", cfg);
    return reports;
}

inline json cmd_probe(const json& cfg_in) {
    json cfg = cfg_in;
    const std::uint64_t seed = detail::seed_of(cfg);
    json probe = detail::section(cfg, "probe",
                                 {{"n_generate", 2000}, {"n_heldout", 2000}, {"bootstrap", 20}, {"impute_samples", 100}});
    cfg["seed"] = seed;
    const auto dir = detail::out_dir(cfg);
    json report;

    if (probe.contains("models")) {
        // Pre-trained models: rank them against a complete ground-truth CSV.
        const MaskedMatrix data = load_csv(detail::required_path(cfg, "data"));
        const MaskedMatrix truth = load_csv(detail::required_path(cfg, "truth"));
        if (truth.observed_count() != truth.rows() * truth.cols())
            throw DataError("probe: truth must be complete");
        std::vector<TrainedModel> models;
        std::vector<std::string> names;
        for (const auto& m : probe.at("models")) {
            names.push_back(m.at("name").get<std::string>());
            models.push_back(load_model(m.at("path").get<std::string>()));
        }
        std::vector<std::pair<std::string, const TrainedModel*>> refs;
        for (std::size_t i = 0; i < models.size(); ++i) refs.emplace_back(names[i], &models[i]);
        std::vector<Eigen::Index> cols = probe.value("columns", std::vector<Eigen::Index>{1, 2});
        for (auto c : cols)
            if (c < 0 || c >= truth.cols()) throw ConfigError("probe: column index out of range");
        Tensor u(data.rows(), 0);
        for (const auto& m : models)
            if (m.spec.conditional_prior()) u = model_aux(m.spec, data);
        Rng rng(seed);
        const auto ranked = identifiability_probe(refs, u, truth.values, cols, probe.at("n_generate").get<Eigen::Index>(),
                                                  probe.at("bootstrap").get<int>(), rng);
        json ranking = json::array();
        for (const auto& e : ranked) ranking.push_back({{"model", e.model}, {"distance", e.distance}});
        probe["columns"] = cols;
        report = json{{"ranking", ranking}};
    } else {
        // Train every kind on the synthetic dataset for each seed.
        json synth = detail::section(cfg, "synth", {{"dataset", "A"}, {"n", 2000}});
        cfg["synth"] = synth;
        json train_cfg = detail::section(cfg, "train", TrainConfig{1e-3, 100, 2000, 0});
        train_cfg.erase("seed");
        cfg["train"] = train_cfg;
        if (!probe.contains("seeds")) probe["seeds"] = std::vector<std::uint64_t>{seed};
        if (!probe.contains("kinds")) probe["kinds"] = {"pvae", "notmiwae", "gina"};
        SynthRunConfig base;
        base.dataset = parse_dataset(synth.at("dataset").get<std::string>());
        base.n = synth.at("n").get<Eigen::Index>();
        base.train = detail::get_as<TrainConfig>(train_cfg, "train settings");
        base.n_generate = probe.at("n_generate").get<Eigen::Index>();
        base.n_heldout = probe.at("n_heldout").get<Eigen::Index>();
        base.bootstrap_reps = probe.at("bootstrap").get<int>();
        base.impute_samples = probe.at("impute_samples").get<int>();
        base.kinds.clear();
        for (const auto& k : probe.at("kinds")) base.kinds.push_back(parse_model_kind(k.get<std::string>()));
        const auto seeds = probe.at("seeds").get<std::vector<std::uint64_t>>();
        if (seeds.empty()) throw ConfigError("probe: seeds must not be empty");

        std::vector<SynthRunResult> runs(seeds.size());
        parallel_for(seeds.size(), num_threads_from_env(), [&](std::size_t i) {
            SynthRunConfig c = base;
            c.seed = seeds[i];
            runs[i] = run_synthetic(c);
        });
        json per_seed = json::array();
        std::vector<std::vector<std::string>> orders;
        for (const auto& run : runs) {
            std::vector<const SynthModelResult*> sorted;
            for (const auto& m : run.models) sorted.push_back(&m);
            std::stable_sort(sorted.begin(), sorted.end(),
                             [](auto* a, auto* b) { return a->energy < b->energy; });
            json ranking = json::array();
            std::vector<std::string> order;
            for (const auto* m : sorted) {
                order.push_back(to_string(m->kind));
                ranking.push_back({{"model", to_string(m->kind)},
                                   {"distance", MetricReport{"energy_distance", m->energy, m->energy_se, 1, {}}},
                                   {"impute_mse", m->impute_mse},
                                   {"final_bound", m->final_bound}});
                MaskedMatrix samples = MaskedMatrix::complete(m->generated);
                save_csv((dir / ("samples_seed" + std::to_string(run.config.seed) + "_" + to_string(m->kind) + ".csv"))
                             .string(),
                         samples);
            }
            orders.push_back(order);
            per_seed.push_back({{"seed", run.config.seed}, {"ranking", ranking}});
        }
        bool stable = true;
        for (const auto& o : orders) stable = stable && o == orders.front();
        report = json{{"dataset", synth.at("dataset")}, {"runs", per_seed}, {"ranking_stable", stable}};
    }
    cfg["probe"] = probe;
    detail::write_json(dir / "probe.json", report);
    detail::echo_config(dir, "probe", cfg);
    return report;
}

/// Every row starts from O = empty; candidates are the entries observed in
/// `data`, which also supplies revealed values.
inline json cmd_active(const json& cfg_in) {
    json cfg = cfg_in;
    const std::uint64_t seed = detail::seed_of(cfg);
    const TrainedModel model = load_model(detail::required_path(cfg, "model_path"));
    MaskedMatrix reveal = detail::load_data(cfg);
    if (reveal.cols() != model.spec.data_dim) throw ShapeError("active: data dimension does not match the model");
    json act = detail::section(cfg, "active", {{"steps", 1}, {"n_outer", 10}, {"n_target", 10}, {"max_rows", -1}});
    act["seed"] = seed;
    cfg["active"] = act;
    cfg["seed"] = seed;
    const auto acq = detail::get_as<AcquisitionConfig>(act, "active settings");
    const auto max_rows = act.at("max_rows").get<std::int64_t>();
    if (max_rows >= 0 && max_rows < reveal.rows()) {
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(max_rows));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        reveal = gina::detail::take_rows(reveal, rows);
    }
    std::vector<double> levels;
    if (act.contains("levels")) levels = detail::get_as<std::vector<double>>(act.at("levels"), "active.levels");

    const auto dir = detail::out_dir(cfg);
    MaskedMatrix start = reveal;
    start.mask.setZero();
    const AcquisitionResult res = run_acquisition(model, start, reveal, acq, levels);
    std::string lines;
    for (const auto& h : res.history) lines += json(h).dump() + "\n";
    detail::write_text(dir / "history.jsonl", lines);
    json summary{{"steps", res.history.size()},
                 {"after_correct", res.after_correct.size()},
                 {"after_incorrect", res.after_incorrect.size()}};
    if (res.level_test) {
        summary["level_change"] = {{"mean_after_correct", res.level_test->mean_a},
                                   {"mean_after_incorrect", res.level_test->mean_b},
                                   {"t", res.level_test->t},
                                   {"df", res.level_test->df},
                                   {"p_value", res.level_test->p_value}};
    }
    detail::write_json(dir / "summary.json", summary);
    detail::echo_config(dir, "active", cfg);
    return summary;
}

/// Run one command, translating failures into exit codes.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err) {
    try {
        fn();
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigExit;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kNumericExit;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kDataExit;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigExit;
    }
}

}  // namespace gina::cli
