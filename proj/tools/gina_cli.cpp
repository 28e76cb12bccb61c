#include <iostream>

#include "CLI11.hpp"

#include "gina/cli.hpp"

namespace {

using gina::cli::Overrides;
using nlohmann::json;

json effective(const std::string& config_path, const Overrides& o) {
    json base = config_path.empty() ? json::object() : gina::cli::read_json_file(config_path);
    return gina::cli::apply_overrides(std::move(base), o);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GINA: deep generative imputation under MNAR missingness"};
    app.set_version_flag("--version", gina::cli::kToolVersion);
    app.require_subcommand(1);

    std::string config_path;
    Overrides o;
    std::uint64_t seed = 0;
    std::string out, dataset, kind, aux, data, model, truth, pred;
    int epochs = 0;
    int k = 0;
    double beta = 0.0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "run seed");
        cmd->add_option("--out", out, "output directory");
    };

    auto* gen = app.add_subcommand("generate", "sample a synthetic MNAR dataset");
    auto* trn = app.add_subcommand("train", "fit a model to a CSV dataset");
    auto* imp = app.add_subcommand("impute", "fill missing entries with a trained model");
    auto* ev = app.add_subcommand("evaluate", "score predictions against held-out truth");
    auto* prb = app.add_subcommand("probe", "compare generated samples with complete data");
    auto* act = app.add_subcommand("active", "sequential feature acquisition");
    for (auto* c : {gen, trn, imp, ev, prb, act}) add_common(c);
    for (auto* c : {gen, prb}) c->add_option("--dataset", dataset, "synthetic dataset A, B or C");
    for (auto* c : {trn}) {
        c->add_option("--model-kind", kind, "gina, pvae or notmiwae");
        c->add_option("--k", k, "importance samples");
        c->add_option("--beta", beta, "weight on the missingness likelihood");
        c->add_option("--aux", aux, "auxiliary source")->check(CLI::IsMember({"metadata", "mask"}));
    }
    for (auto* c : {trn, prb}) c->add_option("--epochs", epochs, "training epochs");
    for (auto* c : {trn, imp, ev, act, prb}) c->add_option("--data", data, "input CSV");
    for (auto* c : {imp, ev, act}) c->add_option("--model", model, "trained model file");
    for (auto* c : {ev, prb}) c->add_option("--truth", truth, "ground-truth CSV");
    ev->add_option("--pred", pred, "prediction CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : gina::cli::kConfigExit;
    }

    auto set_if = [&](const char* flag, auto& target, const auto& value) {
        for (auto* c : app.get_subcommands()) {
            const CLI::Option* opt = c->get_option_no_throw(flag);
            if (opt != nullptr && opt->count() > 0) target = value;
        }
    };
    set_if("--seed", o.seed, seed);
    set_if("--out", o.out, out);
    set_if("--dataset", o.dataset, dataset);
    set_if("--model-kind", o.model_kind, kind);
    set_if("--epochs", o.epochs, epochs);
    set_if("--k", o.k, k);
    set_if("--beta", o.beta, beta);
    set_if("--aux", o.aux, aux);
    set_if("--data", o.data, data);
    set_if("--model", o.model_path, model);
    set_if("--truth", o.truth, truth);
    set_if("--pred", o.pred, pred);

    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    return gina::cli::guarded(
        [&] {
            const json cfg = effective(config_path, o);
            json summary;
            if (name == "generate") summary = gina::cli::cmd_generate(cfg);
            if (name == "train") summary = gina::cli::cmd_train(cfg);
            if (name == "impute") summary = gina::cli::cmd_impute(cfg);
            if (name == "evaluate") summary = gina::cli::cmd_evaluate(cfg);
            if (name == "probe") summary = gina::cli::cmd_probe(cfg);
            if (name == "active") summary = gina::cli::cmd_active(cfg);
            std::cout << summary.dump() << "\n";
        },
        std::cerr);
}
