#include "chorchain/tx_engine.hpp"

#include "chorchain/script.hpp"
#include "chorchain/trace.hpp"

#include <algorithm>
#include <numeric>

namespace chorchain {

void MemoryChainView::add(const Transaction& tx)
{
    const Hash256 id = tx.tx_id();
    txs_[id] = tx;
    for (const auto& in : tx.inputs)
        if (!in.prevout.is_null())
            spenders_[in.prevout] = id;
}

std::optional<Transaction> MemoryChainView::find_transaction(const Hash256& tx_id) const
{
    auto it = txs_.find(tx_id);
    if (it == txs_.end())
        return std::nullopt;
    return it->second;
}

std::optional<Hash256> MemoryChainView::spender_of(const OutPoint& outpoint) const
{
    auto it = spenders_.find(outpoint);
    if (it == spenders_.end())
        return std::nullopt;
    return it->second;
}

std::uint64_t FeePolicy::budget(std::size_t tx_count) const
{
    const std::uint64_t base = per_tx_fee * tx_count;
    return (base * factor_num + factor_den - 1) / factor_den;
}

TxOutput token_output(const ProcessToken& token) { return TxOutput::script_hash(token.value, token.redeem().script_hash()); }

// Budget estimate -----------------------------------------------------------

namespace {

std::size_t seq_need(const Block& seq);

std::size_t block_need(const Block& b)
{
    switch (b.kind) {
    case Block::Kind::Task: return 1;
    case Block::Kind::Seq: return seq_need(b);
    case Block::Kind::Xor: {
        std::size_t best = 0;
        for (const Block& c : b.children)
            best = std::max(best, seq_need(c));
        return best;
    }
    case Block::Kind::And: {
        std::size_t best = 0;
        for (const Block& c : b.children)
            best = std::max(best, seq_need(c) + 1); // + feeder handover
        return 1 + b.children.size() * best + 1;    // split, branches, join
    }
    }
    return 0;
}

std::size_t seq_need(const Block& seq)
{
    std::size_t total = 0;
    for (std::size_t i = 0; i < seq.children.size(); ++i) {
        const Block& c = seq.children[i];
        const bool after_join = i > 0 && seq.children[i - 1].kind == Block::Kind::And;
        if (c.kind == Block::Kind::Task && after_join)
            continue; // the feeders already handed the token to this task
        total += block_need(c);
    }
    return total;
}

} // namespace

std::size_t estimate_tx_count(const ProcessModel& model)
{
    const Block& root = model.structure();
    const bool ends_with_join = !root.children.empty() && root.children.back().kind == Block::Kind::And;
    return seq_need(root) + (ends_with_join ? 0 : 1) + 1; // filler, end
}

// Engine --------------------------------------------------------------------

namespace {

Bytes sign_p2pkh(const Transaction& tx, const EcKey& key)
{
    return encode_unlocking({key.sign(tx.signing_digest()), Bytes(key.public_key().begin(), key.public_key().end()), {}});
}

} // namespace

void TxEngine::require_unspent(const ProcessToken& token) const
{
    if (chain_ && chain_->spender_of(token.holding_output))
        throw TxEngineError(TxEngineError::Code::TokenSpent,
                            "token output " + to_string(token.holding_output) + " is already spent");
}

void TxEngine::sign_token_inputs(Transaction& tx, const std::vector<ProcessToken>& tokens)
{
    const Hash256 digest = tx.signing_digest();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const EcKey& key = tokens[i].holder_key;
        tx.inputs[i].unlocking = encode_unlocking(
            {key.sign(digest), Bytes(key.public_key().begin(), key.public_key().end()), tokens[i].redeem().serialize()});
    }
}

StartResult TxEngine::build_start(const std::vector<Spendable>& funds, std::uint32_t process_id, std::uint32_t now,
                                  std::size_t estimated_tx_count, const EcKey& owner,
                                  std::optional<Hash256> data_hash) const
{
    if (process_id > 0xffff)
        throw TxEngineError(TxEngineError::Code::Range,
                            "process id " + std::to_string(process_id) + " exceeds 65535");
    const std::uint64_t token_value = policy_.budget(estimated_tx_count);
    const std::uint64_t need = token_value + policy_.per_tx_fee;

    std::vector<const Spendable*> order;
    for (const auto& f : funds)
        order.push_back(&f);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->value > b->value; });

    std::vector<const Spendable*> chosen;
    std::uint64_t have = 0;
    for (const Spendable* f : order) {
        if (have >= need)
            break;
        chosen.push_back(f);
        have += f->value;
    }
    if (have < need)
        throw TxEngineError(TxEngineError::Code::InsufficientFunds,
                            "funds " + std::to_string(have) + " sat, need " + std::to_string(need) + " sat",
                            need - have);

    ProcessToken token{static_cast<std::uint16_t>(process_id), {}, token_value, owner, data_hash};
    Transaction tx;
    for (const Spendable* f : chosen)
        tx.inputs.push_back({f->outpoint, f->value, {}, 0xffffffffu});
    tx.outputs.push_back(token_output(token));
    tx.outputs.push_back(TxOutput::data(DataBlock::marker_block(BlockKind::Start, token.process_id, now)));
    if (have > need)
        tx.outputs.push_back(TxOutput::key_hash(have - need, owner.key_hash()));

    for (std::size_t i = 0; i < chosen.size(); ++i)
        tx.inputs[i].unlocking = sign_p2pkh(tx, chosen[i]->key);
    token.holding_output = {tx.tx_id(), 0};
    return {std::move(tx), std::move(token)};
}

HandoverTemplate TxEngine::build_handover_template(const ProcessToken& token, TaskId next_task, std::uint32_t now,
                                                   const Hash160& receiver_key_hash,
                                                   std::optional<Hash256> data_hash) const
{
    if (next_task < kMinTaskId || next_task > kFillerTaskId)
        throw TxEngineError(TxEngineError::Code::InvalidTaskId, "task id " + std::to_string(next_task) +
                                                                    " outside 1.." + std::to_string(kFillerTaskId));
    if (token.value <= policy_.per_tx_fee)
        throw TxEngineError(TxEngineError::Code::TokenTooSmall,
                            "token value " + std::to_string(token.value) + " does not exceed the fee");
    require_unspent(token);

    const RedeemScript next{receiver_key_hash, data_hash};
    Transaction tx;
    tx.inputs.push_back({token.holding_output, token.value, encode_unlocking({{}, {}, token.redeem().serialize()}),
                         0xffffffffu});
    tx.outputs.push_back(TxOutput::script_hash(token.value - policy_.per_tx_fee, next.script_hash()));
    tx.outputs.push_back(
        TxOutput::data(DataBlock::handover(token.process_id, next_task, now, Bytes(kMaxSignatureField, 0))));
    return {std::move(tx), HandoverTerms{token.process_id, next_task, now, receiver_key_hash, data_hash}};
}

Bytes TxEngine::sign_as_receiver(const HandoverTemplate& tmpl, const EcKey& receiver) const
{
    const RedeemScript expected{receiver.key_hash(), tmpl.terms.data_hash};
    const auto lock = tmpl.tx.outputs.empty() ? std::nullopt : tmpl.tx.outputs[0].as_script_hash();
    if (!lock || *lock != expected.script_hash())
        throw TxEngineError(TxEngineError::Code::KeyMismatch, "receiver key does not match OUTPUT#1");
    return receiver.sign(tmpl.tx.signing_digest());
}

Transaction TxEngine::finalize_and_sign_as_sender(const HandoverTemplate& tmpl, ByteView receiver_signature,
                                                  const PublicKey& receiver_public_key, const EcKey& sender) const
{
    const Hash256 digest = tmpl.tx.signing_digest();
    if (hash160(view(receiver_public_key)) != tmpl.terms.receiver_key_hash ||
        !verify_signature(view(receiver_public_key), digest, receiver_signature))
        throw TxEngineError(TxEngineError::Code::BadReceiverSignature, "receiver signature does not verify");

    auto payload = decode_unlocking(tmpl.tx.inputs.at(0).unlocking);
    if (!payload || payload->redeem_script.empty())
        throw TxEngineError(TxEngineError::Code::UnlockFailure, "template input lacks the redeem script");
    Bytes redeem = payload->redeem_script;

    Transaction tx = tmpl.tx;
    auto block = *tx.data_block();
    block.receiver_signature.assign(receiver_signature.begin(), receiver_signature.end());
    tx.outputs[*tx.data_output_index()] = TxOutput::data(block);
    tx.inputs[0].unlocking = encode_unlocking(
        {sender.sign(digest), Bytes(sender.public_key().begin(), sender.public_key().end()), redeem});

    const TxOutput spent = TxOutput::script_hash(tx.inputs[0].prev_value, hash160(view(redeem)));
    if (auto r = verify_input(tx, 0, spent); !r)
        throw TxEngineError(TxEngineError::Code::UnlockFailure, "sender cannot unlock INPUT#1: " + r.error);
    return tx;
}

SplitResult TxEngine::build_split(const ProcessToken& token, std::size_t branch_count, std::uint32_t now) const
{
    if (branch_count < 2)
        throw TxEngineError(TxEngineError::Code::TooFewBranches, "split needs at least two branches");
    if (token.value <= policy_.per_tx_fee ||
        (token.value - policy_.per_tx_fee) / branch_count == 0)
        throw TxEngineError(TxEngineError::Code::TokenTooSmall, "token value too small to split");
    require_unspent(token);

    const std::uint64_t rest = token.value - policy_.per_tx_fee;
    const std::uint64_t share = rest / branch_count;
    Transaction tx;
    tx.inputs.push_back({token.holding_output, token.value, {}, 0xffffffffu});
    std::vector<ProcessToken> branches;
    for (std::size_t i = 0; i < branch_count; ++i) {
        ProcessToken branch = token;
        branch.value = share + (i == 0 ? rest % branch_count : 0);
        tx.outputs.push_back(token_output(branch));
        branches.push_back(std::move(branch));
    }
    tx.outputs.push_back(TxOutput::data(DataBlock::marker_block(BlockKind::Split, token.process_id, now)));
    sign_token_inputs(tx, {token});
    const Hash256 id = tx.tx_id();
    for (std::uint32_t i = 0; i < branches.size(); ++i)
        branches[i].holding_output = {id, i};
    return {std::move(tx), std::move(branches)};
}

JoinResult TxEngine::build_join(const std::vector<ProcessToken>& tokens, std::uint32_t now, const EcKey& holder,
                                std::optional<Hash256> data_hash) const
{
    if (tokens.size() < 2)
        throw TxEngineError(TxEngineError::Code::TooFewTokens, "join needs at least two tokens");
    std::uint64_t total = 0;
    for (const auto& t : tokens) {
        if (t.process_id != tokens[0].process_id)
            throw TxEngineError(TxEngineError::Code::MixedProcesses,
                                "tokens of processes " + std::to_string(tokens[0].process_id) + " and " +
                                    std::to_string(t.process_id));
        require_unspent(t);
        total += t.value;
    }
    if (total <= policy_.per_tx_fee)
        throw TxEngineError(TxEngineError::Code::TokenTooSmall, "joined value does not exceed the fee");

    ProcessToken merged{tokens[0].process_id, {}, total - policy_.per_tx_fee, holder, data_hash};
    Transaction tx;
    for (const auto& t : tokens)
        tx.inputs.push_back({t.holding_output, t.value, {}, 0xffffffffu});
    tx.outputs.push_back(token_output(merged));
    tx.outputs.push_back(TxOutput::data(DataBlock::marker_block(BlockKind::Join, merged.process_id, now)));
    sign_token_inputs(tx, tokens);
    merged.holding_output = {tx.tx_id(), 0};
    return {std::move(tx), std::move(merged)};
}

Transaction TxEngine::build_end(const ProcessToken& token, std::uint32_t now, const Hash160& owner_key_hash,
                                bool extraordinary) const
{
    if (!extraordinary && token.holder_key.key_hash() != owner_key_hash)
        throw TxEngineError(TxEngineError::Code::NotOwner,
                            "only the process owner may end the instance; hand the token back first");
    if (token.value < policy_.per_tx_fee)
        throw TxEngineError(TxEngineError::Code::TokenTooSmall, "token value does not cover the end fee");
    require_unspent(token);

    Transaction tx;
    tx.inputs.push_back({token.holding_output, token.value, {}, 0xffffffffu});
    const std::uint64_t residual = token.value - policy_.per_tx_fee;
    if (residual > 0)
        tx.outputs.push_back(TxOutput::key_hash(residual, owner_key_hash));
    tx.outputs.push_back(TxOutput::data(DataBlock::marker_block(
        extraordinary ? BlockKind::ExtraordinaryEnd : BlockKind::End, token.process_id, now)));
    sign_token_inputs(tx, {token});
    return tx;
}

// Receiver checks -------------------------------------------------------------

TemplateVerdict validate_template(const HandoverTemplate& tmpl, const ExpectedTerms& expected,
                                  const ProcessModel& model, const ChainView& chain)
{
    const Transaction& tx = tmpl.tx;
    if (tx.inputs.size() != 1 || tx.outputs.size() != 2)
        return Reject{3, "template must have one input and two outputs"};

    // 1. INPUT#1 reveals a redeem script matching the spent output.
    const OutPoint& prev = tx.inputs[0].prevout;
    auto parent = chain.find_transaction(prev.tx_id);
    if (!parent)
        throw UnresolvableAncestor(prev.tx_id);
    if (prev.index >= parent->outputs.size())
        return Reject{1, "INPUT#1 references a missing output"};
    auto spent_lock = parent->outputs[prev.index].as_script_hash();
    if (!spent_lock)
        return Reject{1, "INPUT#1 does not spend a script-hash output"};
    auto payload = decode_unlocking(tx.inputs[0].unlocking);
    if (!payload || payload->redeem_script.empty())
        return Reject{1, "INPUT#1 carries no redeem script"};
    if (hash160(payload->redeem_script) != *spent_lock)
        return Reject{1, "redeem script does not hash to the spent output"};
    RedeemScript redeem;
    try {
        redeem = parse_redeem_script(payload->redeem_script);
    } catch (const WireError& e) {
        return Reject{1, std::string("redeem script: ") + e.what()};
    }
    if (expected.previous_data_hash && redeem.data_hash != expected.previous_data_hash)
        return Reject{1, "redeem script data hash differs from the previously transferred data"};

    // 2. OUTPUT#1 locks to our key and the data we just received.
    const RedeemScript ours{expected.receiver_key_hash, expected.received_data_hash};
    if (tx.outputs[0].as_script_hash() != std::optional<Hash160>(ours.script_hash()))
        return Reject{2, "OUTPUT#1 does not lock to the receiver key and received data hash"};

    // 3. OUTPUT#2 carries the negotiated data.
    try {
        check_invariants(tx);
    } catch (const WireError& e) {
        return Reject{3, std::string("template shape: ") + e.what()};
    }
    auto block = tx.outputs[1].data_block();
    if (!block || block->kind != BlockKind::Handover)
        return Reject{3, "OUTPUT#2 is not a handover data block"};
    if (block->process_id != expected.process_id)
        return Reject{3, "process id " + std::to_string(block->process_id) + " instead of " +
                             std::to_string(expected.process_id)};
    if (block->task_id != expected.task_id)
        return Reject{3, "task id " + std::to_string(block->task_id) + " instead of negotiated " +
                             std::to_string(expected.task_id)};
    const auto diff = block->timestamp > expected.timestamp ? block->timestamp - expected.timestamp
                                                            : expected.timestamp - block->timestamp;
    if (diff > expected.skew)
        return Reject{3, "timestamp off by " + std::to_string(diff) + " s"};
    if (!block->signature_is_placeholder())
        return Reject{3, "signature field is not zero-filled"};

    // 4. History so far plus this handover is a legal prefix.
    ExecutionTrace trace = reconstruct_trace(chain, find_start(chain, prev.tx_id));
    if (trace.process_id != block->process_id)
        return Reject{4, "token belongs to process " + std::to_string(trace.process_id)};
    if (trace.ended())
        return Reject{4, "process instance already ended"};
    trace.events.push_back({EventKind::Handover, block->task_id, block->timestamp, "", false, tx.tx_id()});
    auto verdict = check_conformance(model, trace);
    if (auto* d = std::get_if<Deviation>(&verdict))
        return Reject{4, "execution deviates at position " + std::to_string(d->position) + ": " + d->reason};
    return Accept{};
}

} // namespace chorchain
