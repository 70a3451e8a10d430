#include "chorchain/audit.hpp"

#include "chorchain/crypto.hpp"
#include "chorchain/script.hpp"
#include "chorchain/trace.hpp"

#include <fmt/format.h>

namespace chorchain {

bool AuditReport::clean() const
{
    if (!problems.empty())
        return false;
    for (const auto& i : instances)
        if (!i.conformant || !i.problems.empty())
            return false;
    return true;
}

namespace {

std::string short_id(const Hash256& id) { return to_hex(id).substr(0, 16); }

} // namespace

AuditReport audit_chain(const ChainDump& dump, const ProcessModel& model)
{
    const MemoryChainView chain = dump.view();
    AuditReport report;
    report.tx_count = chain.size();

    std::vector<const Transaction*> ordered;
    for (const auto& b : dump.blocks)
        for (const auto& tx : b.txs)
            ordered.push_back(&tx);
    for (const auto& tx : dump.mempool)
        ordered.push_back(&tx);

    std::vector<Hash256> starts;
    for (const Transaction* txp : ordered) {
        const Transaction& tx = *txp;
        const Hash256 id = tx.tx_id();
        const TxKind kind = classify_transaction(tx);
        ++report.kinds[kind];
        if (kind == TxKind::Start)
            starts.push_back(id);
        if (tx.is_funding())
            continue;

        for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
            const auto& prev = tx.inputs[i].prevout;
            auto parent = chain.find_transaction(prev.tx_id);
            if (!parent || prev.index >= parent->outputs.size()) {
                report.problems.push_back(fmt::format("{} input {}: spent output {} not in dump", short_id(id), i,
                                                      to_string(prev)));
                continue;
            }
            auto r = verify_input(tx, i, parent->outputs[prev.index]);
            if (!r.ok)
                report.problems.push_back(fmt::format("{} input {}: {}", short_id(id), i, r.error));
        }

        // The receiver's signature in the data block must match the key that
        // later spends the handed-over output.
        if (kind == TxKind::Handover) {
            const DataBlock block = *tx.data_block();
            auto spender = chain.spender_of({id, 0});
            if (!spender)
                continue;
            auto next = chain.find_transaction(*spender);
            for (const auto& in : next->inputs) {
                if (in.prevout != OutPoint{id, 0})
                    continue;
                auto payload = decode_unlocking(in.unlocking);
                if (!payload || payload->public_key.empty())
                    break;
                if (!verify_signature(payload->public_key, tx.signing_digest(), block.receiver_signature))
                    report.problems.push_back(
                        fmt::format("{}: receiver signature does not verify under the receiver's key", short_id(id)));
            }
        }
    }

    for (const auto& start : starts) {
        InstanceReport inst;
        inst.start_tx = start;
        try {
            inst.trace = reconstruct_trace(chain, start);
            inst.process_id = inst.trace.process_id;
            inst.ended = inst.trace.ended();
            inst.aborted_by_detection = inst.trace.aborted();
            auto verdict = check_conformance(model, inst.trace);
            inst.conformant = is_conformant(verdict);
            if (auto* d = std::get_if<Deviation>(&verdict))
                inst.deviation = fmt::format("position {}: {}", d->position, d->reason);
        } catch (const std::exception& e) {
            inst.problems.push_back(e.what());
        }
        report.instances.push_back(std::move(inst));
    }
    return report;
}

std::string format_report(const AuditReport& r)
{
    std::string out = fmt::format("transactions: {}\n", r.tx_count);
    for (const auto& [kind, n] : r.kinds)
        out += fmt::format("  {:<10} {}\n", to_string(kind), n);
    for (const auto& i : r.instances) {
        std::string verdict = i.conformant ? "conformant" : "DEVIATES (" + i.deviation + ")";
        if (i.aborted_by_detection)
            verdict += ", aborted by detection";
        else if (!i.ended)
            verdict += ", running";
        out += fmt::format("instance {} (start {}): {} events, {}\n", i.process_id, short_id(i.start_tx),
                           i.trace.events.size(), verdict);
        for (const auto& p : i.problems)
            out += "  problem: " + p + "\n";
    }
    for (const auto& p : r.problems)
        out += "problem: " + p + "\n";
    out += r.clean() ? "verdict: clean\n" : "verdict: issues found\n";
    return out;
}

} // namespace chorchain
