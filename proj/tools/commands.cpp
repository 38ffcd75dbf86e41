#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "run_config.hpp"
#include "sfm/csv.hpp"
#include "sfm/estimate.hpp"
#include "sfm/forecast.hpp"
#include "sfm/hmd.hpp"
#include "sfm/simulate.hpp"

namespace fs = std::filesystem;

namespace sfm::cli {

namespace {

KeyValues load_with_overrides(const CommonFlags& flags) {
    KeyValues kv = KeyValues::load(flags.config_path);
    if (!flags.out_override.empty()) kv.set("out", flags.out_override);
    if (flags.seed_override) kv.set("seed", std::to_string(*flags.seed_override));
    if (flags.threads_override) kv.set("threads", std::to_string(*flags.threads_override));
    return kv;
}

std::string config_echo(const KeyValues& kv) {
    std::ostringstream ss;
    for (const auto& [key, value] : kv.items())
        if (key != "out") ss << "config." << key << "=" << value << "\n";
    return ss.str();
}

// Per-run directory: timestamp + config hash, unless the config names one.
std::string resolve_out_dir(const KeyValues& kv, const std::string& command) {
    std::string dir = kv.get_string("out", "");
    if (dir.empty()) {
        const auto now = std::chrono::system_clock::now();
        const std::time_t tt = std::chrono::system_clock::to_time_t(now);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&tt));
        dir = "runs/" + std::string(stamp) + "-" +
              fnv1a64_hex(command + "\n" + config_echo(kv)).substr(0, 8);
    }
    fs::create_directories(dir);
    return dir;
}

void write_manifest(const std::string& dir, const std::string& command, const KeyValues& kv,
                    const std::map<std::string, std::string>& extra) {
    std::ostringstream ss;
    ss << "command=" << command << "\n";
    ss << config_echo(kv);
    for (const auto& [key, value] : extra) ss << key << "=" << value << "\n";
    ss << "version=" << kVersion << "\n";
    write_text_file(dir + "/manifest.txt", ss.str());
}

MortalitySurface load_surface(const KeyValues& kv, const LexisWindow& window) {
    const HmdColumn column = hmd_column_from_name(kv.get_string("sex", "total"));
    const HmdTable deaths = parse_hmd_file(kv.get_string("deaths"), column);
    const HmdTable exposures = parse_hmd_file(kv.get_string("exposures"), column);
    return build_surface(deaths, exposures, window);
}

FrailtySpec frailty_from(const KeyValues& kv) {
    const FrailtyFamily family = family_from_name(kv.get_string("frailty", "degenerate"));
    if (family == FrailtyFamily::Degenerate) return FrailtySpec::degenerate();
    const double sigma2 = kv.get_double("sigma2");
    if (sigma2 == 0.0) return FrailtySpec::degenerate();
    switch (family) {
    case FrailtyFamily::Gamma:           return FrailtySpec::gamma(sigma2);
    case FrailtyFamily::InverseGaussian: return FrailtySpec::inverse_gaussian(sigma2);
    default:                             return FrailtySpec::stable(kv.get_double("alpha"), sigma2);
    }
}

void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
    std::ostringstream ss;
    ss << "iter,loglik\n";
    for (const auto& p : trace) ss << p.iteration << "," << format_double(p.loglik) << "\n";
    write_text_file(path, ss.str());
}

void write_profile_csv(const std::string& path, const std::vector<ProfilePoint>& points) {
    std::ostringstream ss;
    ss << "alpha,sigma2,loglik\n";
    for (const auto& p : points)
        ss << format_double(p.alpha) << "," << format_double(p.sigma2) << ","
           << format_double(p.loglik) << "\n";
    write_text_file(path, ss.str());
}

void write_params_file(const std::string& path, const BaselineParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    write_params_csv(out, params);
}

BaselineParams read_params_file(const std::string& path, BaselineModel model) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    return read_params_csv(in, model);
}

} // namespace

void cmd_fit(const CommonFlags& flags) {
    const KeyValues kv = load_with_overrides(flags);
    kv.require_known({"deaths", "exposures", "sex", "t_min", "t_max", "x_min", "x_max",
                      "baseline", "mode", "frailty", "background", "search", "sigma2", "alpha",
                      "sigma2_upper", "grid_alpha", "grid_sigma2", "out", "seed", "threads"});

    const LexisWindow window = window_from(kv);
    const MortalitySurface surface = load_surface(kv, window);
    const FitMode mode = fit_mode_from_name(kv.get_string("mode", "cohort"));
    const BaselineModel baseline_model = baseline_from_name(kv.get_string("baseline"));
    const BaselineModel background_model =
        baseline_from_name(kv.get_string("background", "constant"));
    const FrailtyFamily family = family_from_name(kv.get_string("frailty", "degenerate"));
    const std::string search = kv.get_string("search", "none");

    SearchConfig cfg;
    cfg.sigma2_upper = kv.get_double("sigma2_upper", 2.0);
    cfg.fit.threads = kv.get_int("threads", 1);
    cfg.em.fit.threads = cfg.fit.threads;
    if (kv.has("sigma2")) cfg.start_sigma2 = std::max(kv.get_double("sigma2"), 1e-4);
    if (kv.has("alpha")) cfg.start_alpha = kv.get_double("alpha");

    FittedModel model;
    std::vector<ProfilePoint> profile_points;

    if (search == "none") {
        const FrailtySpec spec = frailty_from(kv);
        model = mode == FitMode::CohortAdditive
                    ? em_fit_additive(spec, surface, baseline_model, background_model, cfg.em)
                    : fit_fixed_frailty(spec, surface, mode, baseline_model, cfg.fit);
    } else if (search == "profile") {
        if (family == FrailtyFamily::Degenerate)
            throw config_error("search = profile needs a parametric frailty family");
        ProfileResult result =
            profile_fit(family, surface, mode, baseline_model, cfg, background_model);
        model = std::move(result.model);
        profile_points = std::move(result.evaluations);
    } else if (search == "switching") {
        if (mode == FitMode::CohortAdditive)
            throw config_error("search = switching applies to multiplicative modes only");
        if (family == FrailtyFamily::Degenerate)
            throw config_error("search = switching needs a parametric frailty family");
        const FrailtySpec phi0 = frailty_from(kv);
        model = switching_fit(family, surface, mode, baseline_model, phi0, cfg);
    } else {
        throw config_error("unknown search '" + search + "' (none, profile, switching)");
    }

    if (kv.has("grid_alpha") || kv.has("grid_sigma2")) {
        const std::vector<double> alphas =
            kv.has("grid_alpha") ? parse_grid(kv.get_string("grid_alpha"))
                                 : std::vector<double>{model.frailty.alpha};
        const std::vector<double> sigma2s = parse_grid(kv.get_string("grid_sigma2", "0:0.1:2"));
        const auto grid = profile_grid(surface, mode, baseline_model, alphas, sigma2s, cfg,
                                       background_model);
        profile_points.insert(profile_points.end(), grid.begin(), grid.end());
    }

    const std::string dir = resolve_out_dir(kv, "fit");
    write_params_file(dir + "/parameters.csv", model.baseline);
    if (model.background) write_params_file(dir + "/background.csv", *model.background);
    write_trace_csv(dir + "/trace.csv", model.trace);
    if (!profile_points.empty()) write_profile_csv(dir + "/profile.csv", profile_points);

    const RateSurface rates = death_rates(surface);
    write_grid_csv_file(dir + "/rates.csv", window, rates.rates, "value");
    write_grid_csv_file(dir + "/hazard.csv", window, model.hazard.values, "value");
    write_grid_csv_file(dir + "/fitted_mu.csv", window, fitted_mortality(model), "mu");

    std::map<std::string, std::string> extra;
    extra["input_hash.deaths"] = file_hash(kv.get_string("deaths"));
    extra["input_hash.exposures"] = file_hash(kv.get_string("exposures"));
    extra["result.loglik"] = format_double(model.loglik);
    extra["result.frailty"] = family_name(model.frailty.family);
    extra["result.sigma2"] = format_double(model.frailty.sigma2);
    extra["result.alpha"] = format_double(model.frailty.alpha);
    extra["result.mode"] = fit_mode_name(model.mode);
    if (model.mode == FitMode::CohortAdditive)
        extra["result.floored_cells"] = std::to_string(model.floored_cells);
    write_manifest(dir, "fit", kv, extra);
}

void cmd_forecast(const CommonFlags& flags) {
    const KeyValues kv = load_with_overrides(flags);
    kv.require_known({"fit_dir", "horizon", "draws", "x0", "out", "seed", "threads"});

    const std::string fit_dir = kv.get_string("fit_dir");
    if (!fs::exists(fit_dir + "/manifest.txt"))
        throw data_error("fit artifacts missing: no manifest in '" + fit_dir + "'");
    const KeyValues manifest = KeyValues::load(fit_dir + "/manifest.txt");

    LexisWindow window(manifest.get_int("config.t_min"), manifest.get_int("config.t_max"),
                       manifest.get_int("config.x_min"), manifest.get_int("config.x_max"));
    const FitMode mode = fit_mode_from_name(manifest.get_string("result.mode"));
    const BaselineModel baseline_model =
        baseline_from_name(manifest.get_string("config.baseline"));

    FittedModel fitted;
    fitted.mode = mode;
    const FrailtyFamily family = family_from_name(manifest.get_string("result.frailty"));
    const double sigma2 = manifest.get_double("result.sigma2");
    switch (family) {
    case FrailtyFamily::Degenerate: fitted.frailty = FrailtySpec::degenerate(); break;
    case FrailtyFamily::Gamma:      fitted.frailty = FrailtySpec::gamma(sigma2); break;
    case FrailtyFamily::InverseGaussian:
        fitted.frailty = FrailtySpec::inverse_gaussian(sigma2);
        break;
    case FrailtyFamily::Stable:
        fitted.frailty = FrailtySpec::stable(manifest.get_double("result.alpha"), sigma2);
        break;
    }
    fitted.baseline = read_params_file(fit_dir + "/parameters.csv", baseline_model);
    if (mode == FitMode::CohortAdditive)
        fitted.background = read_params_file(
            fit_dir + "/background.csv",
            baseline_from_name(manifest.get_string("config.background", "constant")));

    const GridCsv hazard = read_grid_csv_file(fit_dir + "/hazard.csv");
    if (!(hazard.window == window))
        throw data_error("hazard table window does not match the fit manifest");
    fitted.hazard = {window, hazard.values,
                     mode == FitMode::PeriodMultiplicative ? HazardMode::Period
                                                           : HazardMode::Cohort,
                     mode == FitMode::CohortAdditive};

    const int horizon = kv.get_int("horizon", 0);
    if (horizon < 0) throw config_error("horizon must be nonnegative");
    ForecastOptions opt;
    opt.draws = kv.get_int("draws", 0);
    opt.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    const int x0 = kv.get_int("x0", 60);

    const ForecastResult res = run_forecast(fitted, horizon, opt, x0);

    const std::string dir = resolve_out_dir(kv, "forecast");
    write_grid_csv_file(dir + "/mu_fitted.csv", window, res.mu_fitted, "mu");

    if (horizon > 0) {
        const LexisWindow fw(window.t_max + 1, window.t_max + horizon, window.x_min,
                             window.x_max);
        write_grid_csv_file(dir + "/mu_forecast.csv", fw, res.mu_forecast, "mu");

        std::ostringstream ip;
        ip << "t,component,mean,lo95,hi95,lo95_param,hi95_param\n";
        for (int j = 0; j < horizon; ++j)
            for (int c = 0; c < res.index.mean.cols(); ++c)
                ip << (res.index.first_year + j) << "," << (c + 1) << ","
                   << format_double(res.index.mean(j, c)) << ","
                   << format_double(res.index.lo(j, c)) << ","
                   << format_double(res.index.hi(j, c)) << ","
                   << format_double(res.index.lo_param(j, c)) << ","
                   << format_double(res.index.hi_param(j, c)) << "\n";
        write_text_file(dir + "/index_paths.csv", ip.str());

        if (!res.index.draws.empty()) {
            std::ostringstream ds;
            ds << "draw,t,component,value\n";
            for (std::size_t k = 0; k < res.index.draws.size(); ++k)
                for (int j = 0; j < horizon; ++j)
                    for (int c = 0; c < res.index.draws[k].cols(); ++c)
                        ds << k << "," << (res.index.first_year + j) << "," << (c + 1) << ","
                           << format_double(res.index.draws[k](j, c)) << "\n";
            write_text_file(dir + "/draws.csv", ds.str());
        }
    }

    if (!res.life_expectancy.empty()) {
        std::ostringstream es;
        es << "t,e\n";
        for (std::size_t i = 0; i < res.life_expectancy.size(); ++i)
            es << (res.le_first_year + static_cast<int>(i)) << ","
               << format_double(res.life_expectancy[i]) << "\n";
        write_text_file(dir + "/e.csv", es.str());
    }

    std::map<std::string, std::string> extra;
    extra["input_hash.fit_manifest"] = file_hash(fit_dir + "/manifest.txt");
    extra["result.horizon"] = std::to_string(horizon);
    extra["result.seed"] = std::to_string(opt.seed);
    write_manifest(dir, "forecast", kv, extra);
}

void cmd_backtest(const CommonFlags& flags) {
    const KeyValues kv = load_with_overrides(flags);
    kv.require_known({"deaths", "exposures", "sex", "t_min", "t_max", "x_min", "x_max",
                      "baseline", "fit_t_max", "sigma2_grid", "out", "seed", "threads"});

    const LexisWindow window = window_from(kv);
    const int split = kv.get_int("fit_t_max");
    if (split < window.t_min || split >= window.t_max)
        throw config_error("fit_t_max must split the window: t_min <= fit_t_max < t_max");
    const MortalitySurface surface = load_surface(kv, window);
    const BaselineModel baseline_model = baseline_from_name(kv.get_string("baseline"));
    const std::vector<double> grid = parse_grid(kv.get_string("sigma2_grid", "0:0.05:2"));

    SearchConfig cfg;
    cfg.fit.threads = kv.get_int("threads", 1);
    const LexisWindow fit_w(window.t_min, split, window.x_min, window.x_max);
    const LexisWindow test_w(split + 1, window.t_max, window.x_min, window.x_max);
    const BacktestResult result = backtest_sigma2(surface, fit_w, test_w, baseline_model, grid, cfg);

    const std::string dir = resolve_out_dir(kv, "backtest");
    std::ostringstream ss;
    ss << "sigma2,f\n";
    for (const auto& [s2, f] : result.curve)
        ss << format_double(s2) << "," << format_double(f) << "\n";
    write_text_file(dir + "/backtest.csv", ss.str());

    std::map<std::string, std::string> extra;
    extra["input_hash.deaths"] = file_hash(kv.get_string("deaths"));
    extra["input_hash.exposures"] = file_hash(kv.get_string("exposures"));
    extra["result.sigma2"] = format_double(result.sigma2);
    extra["result.f"] = format_double(result.f_opt);
    write_manifest(dir, "backtest", kv, extra);
}

void cmd_simulate(const CommonFlags& flags) {
    const KeyValues kv = load_with_overrides(flags);
    kv.require_known({"t_min", "t_max", "x_min", "x_max", "baseline", "params", "frailty",
                      "sigma2", "alpha", "background", "background_params", "exposure_level",
                      "out", "seed", "threads"});

    const LexisWindow window = window_from(kv);
    const BaselineModel baseline_model = baseline_from_name(kv.get_string("baseline"));
    const BaselineParams base = read_params_file(kv.get_string("params"), baseline_model);
    const FrailtySpec spec = frailty_from(kv);
    const double exposure = kv.get_double("exposure_level", 1e5);
    const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));

    std::optional<BaselineParams> background;
    if (kv.has("background_params"))
        background = read_params_file(kv.get_string("background_params"),
                                      baseline_from_name(kv.get_string("background", "constant")));

    const MortalitySurface surface = simulate_surface(spec, base, window, exposure, seed,
                                                      background ? &*background : nullptr);

    const std::string dir = resolve_out_dir(kv, "simulate");
    std::ofstream deaths(dir + "/deaths.txt", std::ios::binary);
    write_hmd_table(deaths, window, surface.deaths, "Deaths");
    std::ofstream exposures(dir + "/exposures.txt", std::ios::binary);
    write_hmd_table(exposures, window, surface.exposures, "Exposure to risk");
    write_grid_csv_file(dir + "/deaths.csv", window, surface.deaths, "value");
    write_grid_csv_file(dir + "/exposures.csv", window, surface.exposures, "value");

    std::map<std::string, std::string> extra;
    extra["input_hash.params"] = file_hash(kv.get_string("params"));
    extra["result.seed"] = std::to_string(seed);
    write_manifest(dir, "simulate", kv, extra);
}

} // namespace sfm::cli
