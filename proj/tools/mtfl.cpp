#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtfl/config.hpp"
#include "mtfl/errors.hpp"
#include "mtfl/pipeline.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

// Flag values collected before they are layered over the config file.
struct Overrides {
    std::optional<std::string> config, out, mode;
    std::optional<std::uint64_t> seed;
    std::optional<int> d, r, m, T, n_per_task, probes, m_hat, n_train, n_eval, n_iters, n_supports;
    std::optional<std::int64_t> n_mc;
    std::optional<double> lambda_hat;
    std::vector<std::string> axes;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> tables;
    bool margin = false;
};

void add_run_options(CLI::App& app, Overrides& o) {
    app.add_option("-c,--config", o.config, "TOML or JSON config file");
    app.add_option("-o,--out", o.out, "output directory");
    app.add_option("--seed", o.seed, "master seed");
    app.add_option("--d", o.d, "input dimension");
    app.add_option("--r", o.r, "label-relevant coordinates");
    app.add_option("--m", o.m, "first-layer width (even)");
    app.add_option("--T", o.T, "number of pretraining tasks");
    app.add_option("--n-per-task", o.n_per_task, "samples per task and step");
    app.add_option("--n-mc", o.n_mc, "Monte Carlo samples per probe");
    app.add_option("--probes", o.probes, "random w probes");
    app.add_option("--m-hat", o.m_hat, "embedding width");
    app.add_option("--n-train", o.n_train, "head training samples");
    app.add_option("--n-eval", o.n_eval, "evaluation samples");
    app.add_option("--n-iters", o.n_iters, "head solver iterations");
    app.add_option("--n-supports", o.n_supports, "sampled parity supports");
    app.add_option("--lambda-hat", o.lambda_hat, "head regularisation");
    app.add_option("--axis", o.axes, "sweep axis, e.g. T=256,1024,4096");
    app.add_option("--seeds", o.seeds, "seed list for sweep and baseline");
    app.add_option("--table", o.tables, "downstream truth table, e.g. +--+");
    app.add_flag("--margin", o.margin, "run the margin check per table");
}

std::vector<int> parse_ints(const std::string& list) {
    std::vector<int> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw mtfl::config_error("--axis value \"" + item + "\" is not an integer");
        }
    }
    return out;
}

// Defaults < file < flags. Dimension flags land in the section the mode reads.
mtfl::json layered_document(const Overrides& o, const std::string& mode) {
    mtfl::json doc = o.config ? mtfl::load_config_document(*o.config) : mtfl::json::object();
    if (!doc.is_object()) throw mtfl::config_error("configuration must be a table");
    doc["mode"] = mode;
    if (o.seed) doc["seed"] = *o.seed;
    if (o.out) doc["output_dir"] = *o.out;

    const char* dims = mode == "verify" ? "verify" : mode == "baseline" ? "baseline" : "pretrain";
    auto set = [&](const char* sec, const char* key, const auto& v) {
        if (v) doc[sec][key] = *v;
    };
    set(dims, "d", o.d);
    set(dims, "r", o.r);
    set("pretrain", "m", o.m);
    set("pretrain", "T", o.T);
    set("pretrain", "n_per_task", o.n_per_task);
    set("verify", "n_mc", o.n_mc);
    set("verify", "probes", o.probes);
    const char* head = mode == "baseline" ? "baseline" : "downstream";
    set(head, "m_hat", o.m_hat);
    set(head, "n_train", o.n_train);
    set(head, "n_eval", o.n_eval);
    set(head, "n_iters", o.n_iters);
    set(head, "lambda_hat", o.lambda_hat);
    set("baseline", "n_supports", o.n_supports);
    if (!o.seeds.empty()) doc[mode == "baseline" ? "baseline" : "sweep"]["seeds"] = o.seeds;
    if (!o.tables.empty()) doc["downstream"]["tables"] = o.tables;
    if (o.margin) doc["downstream"]["margin"] = true;
    for (const auto& axis : o.axes) {
        const auto eq = axis.find('=');
        const std::string name = axis.substr(0, eq);
        if (eq == std::string::npos || (name != "T" && name != "d" && name != "m"))
            throw mtfl::config_error("--axis must look like T=..., d=... or m=...");
        doc["sweep"][name] = parse_ints(axis.substr(eq + 1));
    }
    return doc;
}

int execute(const Overrides& o, const std::string& mode) {
    const auto config = mtfl::config_from_document(layered_document(o, mode));
    const auto result = mtfl::run_experiment(config);
    std::cout << result.record["metrics"].dump(2) << "\n";
    for (const auto& f : result.files) std::cerr << "wrote " << f.string() << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task representation learning laboratory"};
    app.require_subcommand(1);

    Overrides o;
    const std::vector<std::string> modes{"pretrain", "verify", "downstream", "baseline", "sweep"};
    std::vector<CLI::App*> subs;
    for (const auto& mode : modes) {
        auto* sub = app.add_subcommand(mode, "run the " + mode + " pipeline");
        add_run_options(*sub, o);
        subs.push_back(sub);
    }
    auto* run = app.add_subcommand("run", "run the pipeline named by --mode");
    add_run_options(*run, o);
    run->add_option("--mode", o.mode, "pretrain | verify | downstream | baseline | sweep")
        ->required()
        ->check(CLI::IsMember(modes));

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a config file against the schema");
    validate->add_option("path", validate_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (validate->parsed()) {
            const auto issue = mtfl::validate_config(validate_path);
            if (issue.ok()) {
                std::cout << "ok\n";
                return exit_ok;
            }
            for (const auto& v : issue.violations) std::cout << v << "\n";
            return exit_config;
        }
        if (run->parsed()) return execute(o, *o.mode);
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (subs[i]->parsed()) return execute(o, modes[i]);
    } catch (const mtfl::config_error& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_config;
}
