#include "chorchain/wire.hpp"

#include "chorchain/crypto.hpp"

#include <algorithm>
#include <limits>

namespace chorchain {

std::string_view to_string(WireError::Code code)
{
    using C = WireError::Code;
    switch (code) {
    case C::Truncated: return "truncated";
    case C::LengthMismatch: return "length-mismatch";
    case C::UnknownMarker: return "unknown-marker";
    case C::Oversize: return "oversize";
    case C::InvalidSignatureLength: return "invalid-signature-length";
    case C::BadHashSize: return "bad-hash-size";
    case C::MalformedScript: return "malformed-script";
    case C::UnsupportedScript: return "unsupported-script";
    case C::TrailingBytes: return "trailing-bytes";
    case C::MultipleDataOutputs: return "multiple-data-outputs";
    case C::NonZeroDataValue: return "non-zero-data-value";
    case C::NegativeFee: return "negative-fee";
    case C::ValueOverflow: return "value-overflow";
    case C::BadShape: return "bad-shape";
    }
    return "?";
}

std::string_view to_string(BlockKind kind)
{
    switch (kind) {
    case BlockKind::Start: return "start";
    case BlockKind::Handover: return "handover";
    case BlockKind::Split: return "split";
    case BlockKind::Join: return "join";
    case BlockKind::End: return "end";
    case BlockKind::ExtraordinaryEnd: return "extraordinary-end";
    }
    return "?";
}

std::string_view to_string(TxKind kind)
{
    switch (kind) {
    case TxKind::NotProcess: return "not-process";
    case TxKind::Start: return "start";
    case TxKind::Handover: return "handover";
    case TxKind::Split: return "split";
    case TxKind::Join: return "join";
    case TxKind::End: return "end";
    }
    return "?";
}

std::string to_string(const OutPoint& outpoint)
{
    return to_hex(outpoint.tx_id) + ":" + std::to_string(outpoint.index);
}

void push_data(ByteWriter& w, ByteView data)
{
    if (data.size() <= 75) {
        w.u8(static_cast<std::uint8_t>(data.size()));
    } else if (data.size() <= 255) {
        w.u8(op::PUSHDATA1);
        w.u8(static_cast<std::uint8_t>(data.size()));
    } else {
        throw WireError(WireError::Code::Oversize, "push of " + std::to_string(data.size()) + " bytes");
    }
    w.bytes(data);
}

namespace {

/// Reads one push; nullopt if the next opcode is not a push.
std::optional<Bytes> read_push(ByteReader& r)
{
    const std::uint8_t opcode = r.u8();
    std::size_t len;
    if (opcode >= 1 && opcode <= 75)
        len = opcode;
    else if (opcode == op::PUSHDATA1)
        len = r.u8();
    else
        return std::nullopt;
    return r.bytes(len);
}

} // namespace

// Data block ---------------------------------------------------------------

DataBlock DataBlock::handover(std::uint16_t pid, TaskId task, std::uint32_t ts, Bytes signature)
{
    return {BlockKind::Handover, pid, task, ts, std::move(signature)};
}

DataBlock DataBlock::marker_block(BlockKind kind, std::uint16_t pid, std::uint32_t ts)
{
    return {kind, pid, 0, ts, {}};
}

std::uint8_t DataBlock::marker() const
{
    switch (kind) {
    case BlockKind::Start: return marker::Start;
    case BlockKind::Handover: return task_id;
    case BlockKind::Split: return marker::Split;
    case BlockKind::Join: return marker::Join;
    case BlockKind::End: return marker::End;
    case BlockKind::ExtraordinaryEnd: return marker::ExtraordinaryEnd;
    }
    return 0;
}

bool DataBlock::signature_is_placeholder() const
{
    return std::all_of(receiver_signature.begin(), receiver_signature.end(), [](std::uint8_t b) { return b == 0; });
}

Bytes encode_data_block(const DataBlock& block)
{
    const std::size_t total = kBaseDataBlockSize + block.receiver_signature.size();
    if (total > kMaxDataBlockSize)
        throw WireError(WireError::Code::Oversize,
                        "data block would be " + std::to_string(total) + " bytes (max 80)");
    if (block.kind == BlockKind::Handover) {
        const auto n = block.receiver_signature.size();
        if (n != 71 && n != 72)
            throw WireError(WireError::Code::InvalidSignatureLength,
                            "handover signature must be 71 or 72 bytes, got " + std::to_string(n));
        if (block.task_id == marker::Start || block.task_id >= marker::Split)
            throw WireError(WireError::Code::UnknownMarker,
                            "task id " + std::to_string(block.task_id) + " collides with a marker");
    } else if (!block.receiver_signature.empty()) {
        throw WireError(WireError::Code::InvalidSignatureLength, "only handover blocks carry a signature");
    }

    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(total - 1));
    w.u16be(block.process_id);
    w.u8(block.marker());
    w.u32be(block.timestamp);
    w.bytes(block.receiver_signature);
    return std::move(w).take();
}

DataBlock decode_data_block(ByteView bytes)
{
    if (bytes.size() < kBaseDataBlockSize)
        throw WireError(WireError::Code::Truncated,
                        "data block needs at least 8 bytes, got " + std::to_string(bytes.size()));
    const std::size_t declared = bytes[0];
    if (declared + 1 != bytes.size())
        throw WireError(WireError::Code::LengthMismatch, "length byte says " + std::to_string(declared) +
                                                              " but " + std::to_string(bytes.size() - 1) +
                                                              " bytes follow");
    if (bytes.size() > kMaxDataBlockSize)
        throw WireError(WireError::Code::Oversize, "data block of " + std::to_string(bytes.size()) + " bytes");

    ByteReader r(bytes.subspan(1));
    DataBlock block;
    block.process_id = r.u16be();
    const std::uint8_t m = r.u8();
    block.timestamp = r.u32be();
    const std::size_t sig_len = r.remaining();

    if (sig_len == 0) {
        switch (m) {
        case marker::Start: block.kind = BlockKind::Start; break;
        case marker::Split: block.kind = BlockKind::Split; break;
        case marker::Join: block.kind = BlockKind::Join; break;
        case marker::End: block.kind = BlockKind::End; break;
        case marker::ExtraordinaryEnd: block.kind = BlockKind::ExtraordinaryEnd; break;
        default:
            throw WireError(WireError::Code::UnknownMarker,
                            "marker 0x" + to_hex(Bytes{m}) + " is not valid in a block without signature");
        }
        return block;
    }
    if (sig_len != 71 && sig_len != 72)
        throw WireError(WireError::Code::InvalidSignatureLength,
                        "signature field of " + std::to_string(sig_len) + " bytes");
    if (m == marker::Start || m >= marker::Split)
        throw WireError(WireError::Code::UnknownMarker,
                        "marker 0x" + to_hex(Bytes{m}) + " is not a task id but the block carries a signature");
    block.kind = BlockKind::Handover;
    block.task_id = m;
    block.receiver_signature = r.bytes(sig_len);
    return block;
}

// Redeem script ------------------------------------------------------------

Bytes build_redeem_script(ByteView payee_key_hash, std::optional<ByteView> data_hash)
{
    if (payee_key_hash.size() != 20)
        throw WireError(WireError::Code::BadHashSize,
                        "key hash must be 20 bytes, got " + std::to_string(payee_key_hash.size()));
    if (data_hash && data_hash->size() != 32)
        throw WireError(WireError::Code::BadHashSize,
                        "data hash must be 32 bytes, got " + std::to_string(data_hash->size()));
    ByteWriter w;
    if (data_hash) {
        push_data(w, *data_hash);
        w.u8(op::DROP);
    }
    w.u8(op::DUP);
    w.u8(op::HASH160);
    push_data(w, payee_key_hash);
    w.u8(op::EQUALVERIFY);
    w.u8(op::CHECKSIG);
    return std::move(w).take();
}

Bytes RedeemScript::serialize() const
{
    if (data_hash)
        return build_redeem_script(view(payee_key_hash), view(*data_hash));
    return build_redeem_script(view(payee_key_hash), std::nullopt);
}

Hash160 RedeemScript::script_hash() const { return hash160(view(serialize())); }

RedeemScript parse_redeem_script(ByteView script)
{
    if (!script.empty() && script.back() == op::CHECKMULTISIG)
        throw WireError(WireError::Code::UnsupportedScript, "multi-signature scripts are not supported");
    RedeemScript out;
    try {
        ByteReader r(script);
        auto expect = [&](std::uint8_t opcode) {
            const std::uint8_t got = r.u8();
            if (got != opcode)
                throw WireError(WireError::Code::UnsupportedScript,
                                "unexpected opcode 0x" + to_hex(Bytes{got}) + " at offset " +
                                    std::to_string(r.position() - 1));
        };
        if (!r.empty() && script[0] == 32) {
            auto hash = read_push(r);
            out.data_hash.emplace();
            std::copy(hash->begin(), hash->end(), out.data_hash->begin());
            expect(op::DROP);
        }
        expect(op::DUP);
        expect(op::HASH160);
        if (r.u8() != 20)
            throw WireError(WireError::Code::UnsupportedScript, "key hash push must be 20 bytes");
        out.payee_key_hash = r.fixed<20>();
        expect(op::EQUALVERIFY);
        expect(op::CHECKSIG);
        if (!r.empty())
            throw WireError(WireError::Code::UnsupportedScript, "trailing opcodes after CHECKSIG");
    } catch (const TruncatedInput&) {
        throw WireError(WireError::Code::MalformedScript, "redeem script is truncated");
    }
    return out;
}

// Unlocking payloads -------------------------------------------------------

Bytes encode_unlocking(const UnlockingPayload& p)
{
    ByteWriter w;
    if (!p.signature.empty())
        push_data(w, p.signature);
    if (!p.public_key.empty())
        push_data(w, p.public_key);
    if (!p.redeem_script.empty())
        push_data(w, p.redeem_script);
    return std::move(w).take();
}

std::optional<UnlockingPayload> decode_unlocking(ByteView script)
{
    std::vector<Bytes> pushes;
    try {
        ByteReader r(script);
        while (!r.empty()) {
            auto push = read_push(r);
            if (!push)
                return std::nullopt;
            pushes.push_back(std::move(*push));
        }
    } catch (const TruncatedInput&) {
        return std::nullopt;
    }
    UnlockingPayload p;
    switch (pushes.size()) {
    case 0: break;
    case 1: p.redeem_script = std::move(pushes[0]); break;
    case 2:
        p.signature = std::move(pushes[0]);
        p.public_key = std::move(pushes[1]);
        break;
    case 3:
        p.signature = std::move(pushes[0]);
        p.public_key = std::move(pushes[1]);
        p.redeem_script = std::move(pushes[2]);
        break;
    default: return std::nullopt;
    }
    return p;
}

// Outputs ------------------------------------------------------------------

TxOutput TxOutput::script_hash(std::uint64_t value, const Hash160& hash)
{
    ByteWriter w;
    w.u8(op::HASH160);
    push_data(w, view(hash));
    w.u8(op::EQUAL);
    return {value, std::move(w).take()};
}

TxOutput TxOutput::key_hash(std::uint64_t value, const Hash160& hash)
{
    ByteWriter w;
    w.u8(op::DUP);
    w.u8(op::HASH160);
    push_data(w, view(hash));
    w.u8(op::EQUALVERIFY);
    w.u8(op::CHECKSIG);
    return {value, std::move(w).take()};
}

TxOutput TxOutput::data(const DataBlock& block)
{
    ByteWriter w;
    w.u8(op::RETURN);
    push_data(w, encode_data_block(block));
    return {0, std::move(w).take()};
}

std::optional<Hash160> TxOutput::as_script_hash() const
{
    if (script.size() != 23 || script[0] != op::HASH160 || script[1] != 20 || script[22] != op::EQUAL)
        return std::nullopt;
    Hash160 h;
    std::copy(script.begin() + 2, script.begin() + 22, h.begin());
    return h;
}

std::optional<Hash160> TxOutput::as_key_hash() const
{
    if (script.size() != 25 || script[0] != op::DUP || script[1] != op::HASH160 || script[2] != 20 ||
        script[23] != op::EQUALVERIFY || script[24] != op::CHECKSIG)
        return std::nullopt;
    Hash160 h;
    std::copy(script.begin() + 3, script.begin() + 23, h.begin());
    return h;
}

std::optional<DataBlock> TxOutput::data_block() const
{
    if (!is_data())
        return std::nullopt;
    try {
        ByteReader r(ByteView(script).subspan(1));
        auto payload = read_push(r);
        if (!payload || !r.empty())
            return std::nullopt;
        return decode_data_block(*payload);
    } catch (const TruncatedInput&) {
        return std::nullopt;
    } catch (const WireError&) {
        return std::nullopt;
    }
}

// Transactions --------------------------------------------------------------

namespace {

std::uint64_t checked_sum(std::uint64_t a, std::uint64_t b)
{
    if (a > std::numeric_limits<std::uint64_t>::max() - b)
        throw WireError(WireError::Code::ValueOverflow, "value sum overflows");
    return a + b;
}

void write_tx(ByteWriter& w, const Transaction& tx)
{
    w.u32le(tx.version);
    w.varint(tx.inputs.size());
    for (const auto& in : tx.inputs) {
        w.bytes(in.prevout.tx_id);
        w.u32le(in.prevout.index);
        w.u64le(in.prev_value);
        w.var_bytes(in.unlocking);
        w.u32le(in.sequence);
    }
    w.varint(tx.outputs.size());
    for (const auto& out : tx.outputs) {
        w.u64le(out.value);
        w.var_bytes(out.script);
    }
    w.u32le(tx.locktime);
}

[[noreturn]] void shape_error(TxKind kind, const std::string& what)
{
    throw WireError(WireError::Code::BadShape, std::string(to_string(kind)) + " transaction " + what);
}

} // namespace

std::uint64_t Transaction::input_value() const
{
    std::uint64_t sum = 0;
    for (const auto& in : inputs)
        sum = checked_sum(sum, in.prev_value);
    return sum;
}

std::uint64_t Transaction::output_value() const
{
    std::uint64_t sum = 0;
    for (const auto& out : outputs)
        sum = checked_sum(sum, out.value);
    return sum;
}

std::int64_t Transaction::fee() const
{
    return static_cast<std::int64_t>(input_value()) - static_cast<std::int64_t>(output_value());
}

std::optional<std::size_t> Transaction::data_output_index() const
{
    for (std::size_t i = 0; i < outputs.size(); ++i)
        if (outputs[i].is_data())
            return i;
    return std::nullopt;
}

std::optional<DataBlock> Transaction::data_block() const
{
    auto i = data_output_index();
    if (!i)
        return std::nullopt;
    return outputs[*i].data_block();
}

void check_invariants(const Transaction& tx)
{
    std::size_t data_outputs = 0;
    for (const auto& out : tx.outputs)
        if (out.is_data()) {
            ++data_outputs;
            if (out.value != 0)
                throw WireError(WireError::Code::NonZeroDataValue,
                                "data output carries " + std::to_string(out.value) + " sat");
        }
    if (data_outputs > 1)
        throw WireError(WireError::Code::MultipleDataOutputs,
                        std::to_string(data_outputs) + " data outputs (at most one allowed)");
    if (tx.input_value() < tx.output_value())
        throw WireError(WireError::Code::NegativeFee, "outputs (" + std::to_string(tx.output_value()) +
                                                          ") exceed inputs (" + std::to_string(tx.input_value()) +
                                                          ")");

    const TxKind kind = classify_transaction(tx);
    if (kind == TxKind::NotProcess)
        return;
    const auto data_at = *tx.data_output_index();
    const std::size_t n_out = tx.outputs.size();
    auto is_token = [&](std::size_t i) { return tx.outputs[i].as_script_hash().has_value(); };

    switch (kind) {
    case TxKind::Start:
        if (tx.inputs.empty())
            shape_error(kind, "needs at least one input");
        if (n_out < 2 || n_out > 3 || !is_token(0) || data_at != 1)
            shape_error(kind, "must be token output, data output, optional change");
        break;
    case TxKind::Handover:
        if (tx.inputs.size() != 1)
            shape_error(kind, "needs exactly one token input");
        if (n_out != 2 || !is_token(0) || data_at != 1)
            shape_error(kind, "must be token output followed by data output");
        break;
    case TxKind::Split:
        if (tx.inputs.size() != 1)
            shape_error(kind, "needs exactly one token input");
        if (n_out < 3 || data_at != n_out - 1)
            shape_error(kind, "needs at least two token outputs followed by the data output");
        for (std::size_t i = 0; i + 1 < n_out; ++i)
            if (!is_token(i))
                shape_error(kind, "output " + std::to_string(i) + " is not a token output");
        break;
    case TxKind::Join:
        if (tx.inputs.size() < 2)
            shape_error(kind, "needs at least two token inputs");
        if (n_out != 2 || !is_token(0) || data_at != 1)
            shape_error(kind, "must be token output followed by data output");
        break;
    case TxKind::End:
        if (tx.inputs.size() != 1)
            shape_error(kind, "needs exactly one token input");
        break;
    case TxKind::NotProcess: break;
    }
}

Bytes Transaction::serialize() const
{
    check_invariants(*this);
    ByteWriter w;
    write_tx(w, *this);
    return std::move(w).take();
}

Transaction Transaction::deserialize(ByteView bytes)
{
    Transaction tx;
    try {
        ByteReader r(bytes);
        tx.version = r.u32le();
        const auto n_in = r.varint();
        if (n_in > 10000)
            throw WireError(WireError::Code::MalformedScript, "implausible input count");
        for (std::uint64_t i = 0; i < n_in; ++i) {
            TxInput in;
            in.prevout.tx_id = r.fixed<32>();
            in.prevout.index = r.u32le();
            in.prev_value = r.u64le();
            in.unlocking = r.var_bytes(10000);
            in.sequence = r.u32le();
            tx.inputs.push_back(std::move(in));
        }
        const auto n_out = r.varint();
        if (n_out > 10000)
            throw WireError(WireError::Code::MalformedScript, "implausible output count");
        for (std::uint64_t i = 0; i < n_out; ++i) {
            TxOutput out;
            out.value = r.u64le();
            out.script = r.var_bytes(10000);
            tx.outputs.push_back(std::move(out));
        }
        tx.locktime = r.u32le();
        if (!r.empty())
            throw WireError(WireError::Code::TrailingBytes,
                            std::to_string(r.remaining()) + " bytes after the transaction");
    } catch (const TruncatedInput& e) {
        throw WireError(WireError::Code::Truncated, std::string("transaction truncated: ") + e.what());
    }
    check_invariants(tx);
    return tx;
}

Hash256 Transaction::tx_id() const
{
    ByteWriter w;
    write_tx(w, *this);
    return double_sha256(view(w.data()));
}

Hash256 Transaction::signing_digest() const
{
    Transaction copy = *this;
    for (auto& in : copy.inputs)
        in.unlocking.clear();
    if (auto i = copy.data_output_index()) {
        if (auto block = copy.outputs[*i].data_block(); block && block->kind == BlockKind::Handover) {
            block->receiver_signature.assign(kMaxSignatureField, 0);
            copy.outputs[*i] = TxOutput::data(*block);
        }
    }
    ByteWriter w;
    write_tx(w, copy);
    return double_sha256(view(w.data()));
}

TxKind classify_transaction(const Transaction& tx)
{
    std::size_t data_outputs = 0;
    for (const auto& out : tx.outputs)
        data_outputs += out.is_data() ? 1 : 0;
    if (data_outputs != 1)
        return TxKind::NotProcess;
    auto block = tx.data_block();
    if (!block)
        return TxKind::NotProcess;
    switch (block->kind) {
    case BlockKind::Start: return TxKind::Start;
    case BlockKind::Handover: return TxKind::Handover;
    case BlockKind::Split: return TxKind::Split;
    case BlockKind::Join: return TxKind::Join;
    case BlockKind::End:
    case BlockKind::ExtraordinaryEnd: return TxKind::End;
    }
    return TxKind::NotProcess;
}

std::vector<std::uint32_t> token_outputs(const Transaction& tx)
{
    std::vector<std::uint32_t> out;
    const TxKind kind = classify_transaction(tx);
    if (kind == TxKind::NotProcess || kind == TxKind::End)
        return out;
    for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) {
        if (tx.outputs[i].is_data())
            break;
        if (tx.outputs[i].as_script_hash())
            out.push_back(i);
    }
    return out;
}

} // namespace chorchain
