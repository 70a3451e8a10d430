#pragma once

#include "chorchain/tx_engine.hpp"

#include <string>

namespace chorchain::testing {

inline EcKey key(const std::string& name) { return EcKey::derive(view(name)); }

/// A funded owner and a chain view that records every built transaction.
struct EngineFixture {
    MemoryChainView chain;
    TxEngine engine{FeePolicy{}, &chain};
    EcKey owner = key("owner");
    std::uint32_t clock = 1'600'000'000;

    std::uint32_t fundings = 0;

    Spendable fund(std::uint64_t value)
    {
        Transaction funding;
        funding.inputs.push_back({OutPoint::null(), value, {}, fundings++});
        funding.outputs.push_back(TxOutput::key_hash(value, owner.key_hash()));
        chain.add(funding);
        return {OutPoint{funding.tx_id(), 0}, value, owner};
    }

    ProcessToken start(std::uint16_t pid, std::size_t tx_count)
    {
        auto funds = fund(engine.policy().budget(tx_count) + engine.policy().per_tx_fee + 5000);
        auto r = engine.build_start({funds}, pid, clock++, tx_count, owner);
        chain.add(r.tx);
        return r.token;
    }

    /// Full fault-free handover; returns the receiver's new token.
    ProcessToken handover(const ProcessToken& token, TaskId task, const EcKey& receiver, const std::string& data)
    {
        const Hash256 h = sha256(view(data));
        auto tmpl = engine.build_handover_template(token, task, clock++, receiver.key_hash(), h);
        Bytes sig = engine.sign_as_receiver(tmpl, receiver);
        Transaction tx = engine.finalize_and_sign_as_sender(tmpl, sig, receiver.public_key(), token.holder_key);
        chain.add(tx);
        return ProcessToken{token.process_id, {tx.tx_id(), 0}, tx.outputs[0].value, receiver, h};
    }
};

} // namespace chorchain::testing
