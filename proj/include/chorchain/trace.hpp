#pragma once

#include "chorchain/chain_view.hpp"
#include "chorchain/process_model.hpp"

#include <stdexcept>

namespace chorchain {

class LineageError : public std::runtime_error {
public:
    LineageError(const Hash256& tx_id, const std::string& message)
        : std::runtime_error(message + " (tx " + to_hex(tx_id) + ")"), tx_id_(tx_id)
    {
    }
    const Hash256& tx_id() const { return tx_id_; }

private:
    Hash256 tx_id_;
};

class UnresolvableAncestor : public std::runtime_error {
public:
    explicit UnresolvableAncestor(const Hash256& tx_id)
        : std::runtime_error("cannot resolve transaction " + to_hex(tx_id)), tx_id_(tx_id)
    {
    }
    const Hash256& tx_id() const { return tx_id_; }

private:
    Hash256 tx_id_;
};

/// Follows token spends forward from a start transaction. Events come out
/// ordered by timestamp, parents before children on ties.
ExecutionTrace reconstruct_trace(const ChainView& chain, const Hash256& start_tx_id);

/// Walks first inputs backwards to the instance's start transaction.
Hash256 find_start(const ChainView& chain, const Hash256& tx_id);

} // namespace chorchain
