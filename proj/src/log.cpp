#include "chorchain/log.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>

namespace chorchain {

void init_logging()
{
    const char* env = std::getenv("CHORCHAIN_LOG");
    auto level = spdlog::level::warn;
    if (env && *env) {
        level = spdlog::level::from_str(env);
        // from_str answers "off" for anything it does not know
        if (level == spdlog::level::off && std::string_view(env) != "off")
            level = spdlog::level::warn;
    }
    spdlog::set_level(level);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

} // namespace chorchain
