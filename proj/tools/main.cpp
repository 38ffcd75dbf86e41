#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "commands.hpp"
#include "sfm/errors.hpp"

namespace {

void add_common(CLI::App* sub, sfm::cli::CommonFlags& flags) {
    sub->add_option("--config", flags.config_path, "key=value configuration file")->required();
    sub->add_option("--out", flags.out_override, "output directory (overrides config)");
    sub->add_option("--seed", flags.seed_override, "random seed (overrides config)");
    sub->add_option("--threads", flags.threads_override, "worker threads (overrides config)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic frailty mortality models: fit, forecast, backtest, simulate"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("sfm ") + sfm::cli::kVersion);

    sfm::cli::CommonFlags flags;
    CLI::App* fit = app.add_subcommand("fit", "fit a frailty mortality model");
    CLI::App* forecast = app.add_subcommand("forecast", "forecast from fit artifacts");
    CLI::App* backtest = app.add_subcommand("backtest", "forecast-fit search for sigma2");
    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic surface");
    for (CLI::App* sub : {fit, forecast, backtest, simulate}) add_common(sub, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        app.exit(e);
        return 2;
    }

    try {
        if (fit->parsed()) sfm::cli::cmd_fit(flags);
        else if (forecast->parsed()) sfm::cli::cmd_forecast(flags);
        else if (backtest->parsed()) sfm::cli::cmd_backtest(flags);
        else sfm::cli::cmd_simulate(flags);
    } catch (const sfm::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sfm::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const sfm::error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
