#pragma once

#include "chorchain/wire.hpp"

#include <map>
#include <optional>

namespace chorchain {

/// Read access to confirmed and pending transactions.
class ChainView {
public:
    virtual ~ChainView() = default;

    virtual std::optional<Transaction> find_transaction(const Hash256& tx_id) const = 0;
    /// Transaction that spends `outpoint`, if any.
    virtual std::optional<Hash256> spender_of(const OutPoint& outpoint) const = 0;
};

/// Plain map-backed view; used by audits and tests.
class MemoryChainView : public ChainView {
public:
    void add(const Transaction& tx);

    std::optional<Transaction> find_transaction(const Hash256& tx_id) const override;
    std::optional<Hash256> spender_of(const OutPoint& outpoint) const override;

    std::size_t size() const { return txs_.size(); }
    const std::map<Hash256, Transaction>& transactions() const { return txs_; }

private:
    std::map<Hash256, Transaction> txs_;
    std::map<OutPoint, Hash256> spenders_;
};

} // namespace chorchain
