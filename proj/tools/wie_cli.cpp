#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "wie/experiment.hpp"

namespace {

enum Exit { kPass = 0, kVerdictFailed = 1, kInvalidConfig = 2, kRuntimeError = 3 };

void print_summary(std::ostream& out, const wie::Json& j) { out << j.dump() << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weighted-energy selection experiments: ODE and Fourier-multiplier studies, audits, reports."};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out_dir;
    unsigned threads = 0;
    bool threads_set = false;
    std::string log_level = "warn";
    app.add_option("--out-dir", out_dir, "Directory for report.json, summary.csv and field dumps")
        ->envname("WIE_OUT_DIR");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads (1 = serial, 0 = all cores)")
                            ->envname("WIE_THREADS");
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
        ->envname("WIE_LOG_LEVEL")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    auto* validate = app.add_subcommand("validate", "Check a config file and list every violation");
    validate->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_subcommand("schema", "Print the config JSON schema");

    CLI11_PARSE(app, argc, argv);
    threads_set = threads_opt->count() > 0 || std::getenv("WIE_THREADS") != nullptr;

    auto logger = spdlog::stderr_color_mt("wie");
    logger->set_level(spdlog::level::from_str(log_level));
    logger->set_pattern("[%l] %v");

    if (app.got_subcommand("schema")) {
        std::cout << wie::config_schema().dump(2) << '\n';
        return kPass;
    }

    wie::ExperimentConfig config;
    try {
        config = wie::parse_config(config_path);
    } catch (const wie::ConfigError& e) {
        print_summary(std::cerr, {{"status", "invalid"}, {"config", config_path}, {"violations", e.violations()}});
        return kInvalidConfig;
    }
    if (app.got_subcommand("validate")) {
        print_summary(std::cout, {{"status", "valid"}, {"config", config_path}, {"mode", config.mode}});
        return kPass;
    }

    if (threads_set) config.study.threads = threads;
    const std::filesystem::path dir = out_dir.empty() ? config.output.dir : std::filesystem::path(out_dir);
    logger->info("mode {} with {} ladder members, writing to {}", config.mode, config.ladder.size(), dir.string());
    try {
        const auto res = wie::run_experiment(config, dir);
        for (const auto& v : res.report.verdicts)
            logger->log(v.pass ? spdlog::level::info : spdlog::level::warn, "{}: {} {}", v.name,
                        v.pass ? "pass" : "FAIL", v.detail);
        wie::Json failed = wie::Json::array();
        for (const auto& v : res.report.verdicts)
            if (!v.pass) failed.push_back({{"name", v.name}, {"detail", v.detail}});
        const wie::Json summary = {{"status", res.exit_code == 0 ? "pass" : "fail"},
                                   {"report", (dir / "report.json").string()},
                                   {"failed_verdicts", failed}};
        print_summary(res.exit_code == 0 ? std::cout : std::cerr, summary);
        return res.exit_code == 0 ? kPass : kVerdictFailed;
    } catch (const std::exception& e) {
        print_summary(std::cerr, {{"status", "error"}, {"message", e.what()}});
        return kRuntimeError;
    }
}
