#pragma once

#include "chorchain/process_model.hpp"

#include <cstdlib>
#include <string>

namespace chorchain::testing {

inline std::string models_dir()
{
    const char* dir = std::getenv("CHORCHAIN_MODELS");
    return dir ? dir : "models";
}

inline std::string model_path(int id) { return models_dir() + "/model" + std::to_string(id) + ".json"; }

inline ExecutionTrace trace_of(const TaskSequence& tasks, bool ended)
{
    ExecutionTrace trace;
    trace.events.push_back({EventKind::Start, 0, 0, "0", false, {}});
    std::uint32_t ts = 1;
    for (TaskId t : tasks)
        trace.events.push_back({EventKind::Handover, t, ts++, "0", false, {}});
    if (ended)
        trace.events.push_back({EventKind::End, 0, ts, "0", false, {}});
    return trace;
}

} // namespace chorchain::testing
