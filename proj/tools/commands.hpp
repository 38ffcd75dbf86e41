#ifndef SFM_TOOLS_COMMANDS_HPP
#define SFM_TOOLS_COMMANDS_HPP

#include <optional>
#include <string>

namespace sfm::cli {

inline constexpr const char* kVersion = "0.1.0";

struct CommonFlags {
    std::string config_path;
    std::string out_override;
    std::optional<long long> seed_override;
    std::optional<int> threads_override;
};

void cmd_fit(const CommonFlags& flags);
void cmd_forecast(const CommonFlags& flags);
void cmd_backtest(const CommonFlags& flags);
void cmd_simulate(const CommonFlags& flags);

} // namespace sfm::cli

#endif
