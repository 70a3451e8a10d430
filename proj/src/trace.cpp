#include "chorchain/trace.hpp"

#include "chorchain/wire.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace chorchain {

namespace {

std::string parent_lineage(const std::string& lineage)
{
    auto dot = lineage.rfind('.');
    return dot == std::string::npos ? lineage : lineage.substr(0, dot);
}

} // namespace

ExecutionTrace reconstruct_trace(const ChainView& chain, const Hash256& start_tx_id)
{
    auto start = chain.find_transaction(start_tx_id);
    if (!start)
        throw UnresolvableAncestor(start_tx_id);
    if (classify_transaction(*start) != TxKind::Start)
        throw LineageError(start_tx_id, "not a start transaction");

    ExecutionTrace trace;
    trace.process_id = start->data_block()->process_id;

    struct Pending {
        Hash256 id;
        std::string lineage;
    };
    std::deque<Pending> queue{{start_tx_id, "0"}};
    std::set<Hash256> seen{start_tx_id};
    std::map<Hash256, std::size_t> join_arrivals;

    while (!queue.empty()) {
        Pending cur = std::move(queue.front());
        queue.pop_front();
        auto tx = chain.find_transaction(cur.id);
        if (!tx)
            throw UnresolvableAncestor(cur.id);
        const TxKind kind = classify_transaction(*tx);
        const DataBlock block = *tx->data_block();
        if (block.process_id != trace.process_id)
            throw LineageError(cur.id, "token consumed by process " + std::to_string(block.process_id));

        TraceEvent ev;
        ev.timestamp = block.timestamp;
        ev.lineage = cur.lineage;
        ev.tx_id = cur.id;
        switch (kind) {
        case TxKind::Start: ev.kind = EventKind::Start; break;
        case TxKind::Handover:
            ev.kind = EventKind::Handover;
            ev.task_id = block.task_id;
            break;
        case TxKind::Split: ev.kind = EventKind::Split; break;
        case TxKind::Join: ev.kind = EventKind::Join; break;
        case TxKind::End:
            ev.kind = EventKind::End;
            ev.extraordinary = block.kind == BlockKind::ExtraordinaryEnd;
            break;
        case TxKind::NotProcess: break;
        }
        trace.events.push_back(std::move(ev));

        const auto outs = token_outputs(*tx);
        for (std::size_t k = 0; k < outs.size(); ++k) {
            auto spender = chain.spender_of({cur.id, outs[k]});
            if (!spender)
                continue;
            auto next = chain.find_transaction(*spender);
            if (!next)
                throw UnresolvableAncestor(*spender);
            if (classify_transaction(*next) == TxKind::NotProcess)
                throw LineageError(*spender, "token output " + to_string(OutPoint{cur.id, outs[k]}) +
                                                 " spent by a non-process transaction");
            // A join is emitted once every one of its inputs has been reached.
            if (classify_transaction(*next) == TxKind::Join &&
                ++join_arrivals[*spender] < next->inputs.size())
                continue;
            if (!seen.insert(*spender).second)
                continue;
            std::string lineage = cur.lineage;
            if (kind == TxKind::Split)
                lineage += "." + std::to_string(k);
            if (classify_transaction(*next) == TxKind::Join)
                lineage = parent_lineage(cur.lineage);
            queue.push_back({*spender, std::move(lineage)});
        }
    }

    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.timestamp < b.timestamp; });
    return trace;
}

Hash256 find_start(const ChainView& chain, const Hash256& tx_id)
{
    Hash256 cur = tx_id;
    for (;;) {
        auto tx = chain.find_transaction(cur);
        if (!tx)
            throw UnresolvableAncestor(cur);
        const TxKind kind = classify_transaction(*tx);
        if (kind == TxKind::Start)
            return cur;
        if (kind == TxKind::NotProcess || tx->inputs.empty())
            throw LineageError(cur, "no start transaction upstream");
        cur = tx->inputs[0].prevout.tx_id;
    }
}

} // namespace chorchain
