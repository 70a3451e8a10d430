#pragma once

namespace chorchain {

/// Sets the spdlog level from CHORCHAIN_LOG (trace, debug, info, warn,
/// error, off). Defaults to warn.
void init_logging();

} // namespace chorchain
