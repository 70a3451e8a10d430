#pragma once

#include "chorchain/bytes.hpp"
#include "chorchain/process_model.hpp"

#include <compare>
#include <optional>
#include <stdexcept>
#include <string>

namespace chorchain {

class WireError : public std::runtime_error {
public:
    enum class Code {
        Truncated,
        LengthMismatch,
        UnknownMarker,
        Oversize,
        InvalidSignatureLength,
        BadHashSize,
        MalformedScript,
        UnsupportedScript,
        TrailingBytes,
        MultipleDataOutputs,
        NonZeroDataValue,
        NegativeFee,
        ValueOverflow,
        BadShape,
    };

    WireError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

std::string_view to_string(WireError::Code code);

// Script opcodes used by the supported shapes.
namespace op {
inline constexpr std::uint8_t PUSHDATA1 = 0x4c;
inline constexpr std::uint8_t RETURN = 0x6a;
inline constexpr std::uint8_t DROP = 0x75;
inline constexpr std::uint8_t DUP = 0x76;
inline constexpr std::uint8_t EQUAL = 0x87;
inline constexpr std::uint8_t EQUALVERIFY = 0x88;
inline constexpr std::uint8_t HASH160 = 0xa9;
inline constexpr std::uint8_t CHECKSIG = 0xac;
inline constexpr std::uint8_t CHECKMULTISIG = 0xae;
} // namespace op

/// Appends a minimal push (direct for <= 75 bytes, PUSHDATA1 up to 255).
void push_data(ByteWriter& w, ByteView data);

// Data block ---------------------------------------------------------------

namespace marker {
inline constexpr std::uint8_t Start = 0x00;
inline constexpr std::uint8_t Split = 0xFC;
inline constexpr std::uint8_t Join = 0xFD;
inline constexpr std::uint8_t End = 0xFE;
inline constexpr std::uint8_t ExtraordinaryEnd = 0xFF;
} // namespace marker

inline constexpr std::size_t kMaxDataBlockSize = 80;
inline constexpr std::size_t kBaseDataBlockSize = 8;
inline constexpr std::size_t kMaxSignatureField = 72;

enum class BlockKind { Start, Handover, Split, Join, End, ExtraordinaryEnd };

std::string_view to_string(BlockKind kind);

struct DataBlock {
    BlockKind kind = BlockKind::Start;
    std::uint16_t process_id = 0;
    TaskId task_id = 0; // Handover only
    std::uint32_t timestamp = 0;
    Bytes receiver_signature; // Handover only: 71 or 72 bytes, zero-filled in templates

    static DataBlock handover(std::uint16_t pid, TaskId task, std::uint32_t ts, Bytes signature);
    static DataBlock marker_block(BlockKind kind, std::uint16_t pid, std::uint32_t ts);

    std::uint8_t marker() const;
    bool signature_is_placeholder() const;

    friend bool operator==(const DataBlock&, const DataBlock&) = default;
};

Bytes encode_data_block(const DataBlock& block);
DataBlock decode_data_block(ByteView bytes);

// Redeem script ------------------------------------------------------------

struct RedeemScript {
    Hash160 payee_key_hash{};
    std::optional<Hash256> data_hash;

    Bytes serialize() const;
    Hash160 script_hash() const;

    friend bool operator==(const RedeemScript&, const RedeemScript&) = default;
};

/// push(H) DROP DUP HASH160 push(K) EQUALVERIFY CHECKSIG; the first two
/// elements are left out without a data hash.
Bytes build_redeem_script(ByteView payee_key_hash, std::optional<ByteView> data_hash);
RedeemScript parse_redeem_script(ByteView script);

// Transactions --------------------------------------------------------------

struct OutPoint {
    Hash256 tx_id{};
    std::uint32_t index = 0;

    static OutPoint null() { return {Hash256{}, 0xffffffffu}; }
    bool is_null() const { return *this == null(); }

    friend auto operator<=>(const OutPoint&, const OutPoint&) = default;
};

std::string to_string(const OutPoint& outpoint);

/// Pushes of an input's unlocking script: (sig, pubkey, redeem) for a
/// script-hash spend, (sig, pubkey) for key-hash, (redeem) in a template.
struct UnlockingPayload {
    Bytes signature;
    Bytes public_key;
    Bytes redeem_script;

    friend bool operator==(const UnlockingPayload&, const UnlockingPayload&) = default;
};

Bytes encode_unlocking(const UnlockingPayload& payload);
/// nullopt for scripts that are not a sequence of pushes in one of the forms.
std::optional<UnlockingPayload> decode_unlocking(ByteView script);

struct TxInput {
    OutPoint prevout;
    std::uint64_t prev_value = 0; // carried on the wire so fees are checkable offline
    Bytes unlocking;
    std::uint32_t sequence = 0xffffffffu;

    friend bool operator==(const TxInput&, const TxInput&) = default;
};

struct TxOutput {
    std::uint64_t value = 0;
    Bytes script;

    static TxOutput script_hash(std::uint64_t value, const Hash160& hash);
    static TxOutput key_hash(std::uint64_t value, const Hash160& hash);
    static TxOutput data(const DataBlock& block);

    std::optional<Hash160> as_script_hash() const;
    std::optional<Hash160> as_key_hash() const;
    bool is_data() const { return !script.empty() && script[0] == op::RETURN; }
    /// Decoded block of a data output; nullopt when absent or malformed.
    std::optional<DataBlock> data_block() const;

    friend bool operator==(const TxOutput&, const TxOutput&) = default;
};

enum class TxKind { NotProcess, Start, Handover, Split, Join, End };

std::string_view to_string(TxKind kind);

struct Transaction {
    std::uint32_t version = 1;
    std::vector<TxInput> inputs;
    std::vector<TxOutput> outputs;
    std::uint32_t locktime = 0;

    /// Checks the invariants below, then writes the legacy layout.
    Bytes serialize() const;
    static Transaction deserialize(ByteView bytes);

    Hash256 tx_id() const;
    /// Digest both handover parties sign: unlocking scripts emptied and the
    /// receiver signature replaced by 72 zero bytes.
    Hash256 signing_digest() const;

    std::uint64_t input_value() const;
    std::uint64_t output_value() const;
    std::int64_t fee() const;
    bool is_funding() const { return inputs.size() == 1 && inputs[0].prevout.is_null(); }

    std::optional<std::size_t> data_output_index() const;
    std::optional<DataBlock> data_block() const;

    friend bool operator==(const Transaction&, const Transaction&) = default;
};

/// Throws WireError naming the first violated rule: data output count and
/// value, fee sign, and the per-kind input/output shape.
void check_invariants(const Transaction& tx);

TxKind classify_transaction(const Transaction& tx);

/// Indices of the token-carrying (script-hash) outputs of a process transaction.
std::vector<std::uint32_t> token_outputs(const Transaction& tx);

} // namespace chorchain
