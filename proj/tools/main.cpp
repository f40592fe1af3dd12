#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ssbt/runner.hpp"

using namespace ssbt;

namespace {

int fail(const char* category, const std::string& message) {
    nlohmann::json err = {{"error", category}, {"message", message}};
    std::cerr << err.dump() << "\n";
    if (std::string(category) == "config") return 2;
    if (std::string(category) == "dependency") return 3;
    return 1;
}

struct StageArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;
};

void add_stage_options(CLI::App* cmd, StageArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "experiment config file (json)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides,
                    "dotted-key config override, e.g. --set train.epochs=3");
    cmd->add_flag("-f,--force", args.force, "redo the stage even if its artifact exists");
}

int run_stage(const std::string& stage, const StageArgs& args) {
    auto cfg = ExperimentConfig::load(args.config_path, args.overrides);
    Runner runner(cfg);
    bool did = false;
    if (stage == "craft")
        did = runner.craft_stage(args.force);
    else if (stage == "train")
        did = runner.train_stage(args.force);
    else if (stage == "evaluate")
        did = runner.evaluate_stage(args.force);
    else if (stage == "defend")
        did = runner.defend_stage(args.force);
    else if (stage == "sweep")
        did = runner.sweep_stage(args.force);
    std::printf("%s: %s (run %s)\n", stage.c_str(), did ? "done" : "up-to-date",
                runner.dir().string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"source-specific backdoor toolkit"};
    app.require_subcommand(1);

    StageArgs craft_args, train_args, eval_args, defend_args, sweep_args;
    add_stage_options(app.add_subcommand("craft", "build the poisoned/cover training set"),
                      craft_args);
    add_stage_options(app.add_subcommand("train", "train the (backdoored) model"), train_args);
    add_stage_options(app.add_subcommand("evaluate", "compute CDA/ASR/FPR"), eval_args);
    add_stage_options(app.add_subcommand("defend", "run the enabled defences"), defend_args);
    add_stage_options(app.add_subcommand("sweep", "run the configured parameter sweep"),
                      sweep_args);

    std::string report_root = "runs";
    std::string report_out;
    auto* report_cmd = app.add_subcommand("report", "aggregate run results into one table");
    report_cmd->add_option("-r,--runs", report_root, "output root holding run directories");
    report_cmd->add_option("-o,--out", report_out, "also write the table to this csv file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("craft")) return run_stage("craft", craft_args);
        if (app.got_subcommand("train")) return run_stage("train", train_args);
        if (app.got_subcommand("evaluate")) return run_stage("evaluate", eval_args);
        if (app.got_subcommand("defend")) return run_stage("defend", defend_args);
        if (app.got_subcommand("sweep")) return run_stage("sweep", sweep_args);
        if (app.got_subcommand("report")) {
            auto rows = aggregate_results(report_root);
            std::printf("%s\n", kResultsSchema);
            for (const auto& r : rows)
                std::printf("%s,%s,%s,%s,%g,%.4f,%.4f,%.4f,%llu\n", r.run_id.c_str(),
                            r.dataset.c_str(), r.attack_kind.c_str(), r.axis.c_str(),
                            r.axis_value, r.cda, r.asr, r.fpr,
                            static_cast<unsigned long long>(r.seed));
            if (!report_out.empty()) write_results_csv(report_out, rows);
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail("config", e.what());
    } catch (const DependencyError& e) {
        return fail("dependency", e.what());
    } catch (const Error& e) {
        return fail("runtime", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
