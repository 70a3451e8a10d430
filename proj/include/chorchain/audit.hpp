#pragma once

#include "chorchain/dump.hpp"
#include "chorchain/process_model.hpp"

#include <map>
#include <string>

namespace chorchain {

struct InstanceReport {
    std::uint16_t process_id = 0;
    Hash256 start_tx{};
    ExecutionTrace trace;
    bool conformant = false;
    std::string deviation;
    bool ended = false;
    /// An extraordinary end was published after a detected fault.
    bool aborted_by_detection = false;
    std::vector<std::string> problems;
};

struct AuditReport {
    std::size_t tx_count = 0;
    std::map<TxKind, std::size_t> kinds;
    std::vector<InstanceReport> instances;
    /// Script, signature and linkage failures, one line each.
    std::vector<std::string> problems;

    /// No problems and every instance conformant.
    bool clean() const;
};

AuditReport audit_chain(const ChainDump& dump, const ProcessModel& model);
std::string format_report(const AuditReport& report);

} // namespace chorchain
