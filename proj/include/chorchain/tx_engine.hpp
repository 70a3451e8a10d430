#pragma once

#include "chorchain/chain_view.hpp"
#include "chorchain/crypto.hpp"
#include "chorchain/process_model.hpp"
#include "chorchain/wire.hpp"

#include <optional>
#include <stdexcept>
#include <variant>

namespace chorchain {

/// 0.000189816 BTC.
inline constexpr std::uint64_t kDefaultFee = 18982;
inline constexpr std::uint32_t kTimestampSkew = 120;

struct FeePolicy {
    std::uint64_t per_tx_fee = kDefaultFee;
    // Safety factor as a fraction >= 1.
    std::uint64_t factor_num = 1;
    std::uint64_t factor_den = 1;

    /// Token budget for `tx_count` transactions after the start transaction.
    std::uint64_t budget(std::size_t tx_count) const;
};

class TxEngineError : public std::runtime_error {
public:
    enum class Code {
        InsufficientFunds,
        Range,
        InvalidTaskId,
        TokenTooSmall,
        KeyMismatch,
        BadReceiverSignature,
        UnlockFailure,
        MixedProcesses,
        TooFewTokens,
        TooFewBranches,
        NotOwner,
        TokenSpent,
    };

    TxEngineError(Code code, const std::string& message, std::uint64_t shortfall = 0)
        : std::runtime_error(message), code_(code), shortfall_(shortfall)
    {
    }

    Code code() const { return code_; }
    /// Missing satoshi for InsufficientFunds.
    std::uint64_t shortfall() const { return shortfall_; }

private:
    Code code_;
    std::uint64_t shortfall_;
};

/// A key-hash output the owner can spend.
struct Spendable {
    OutPoint outpoint;
    std::uint64_t value = 0;
    EcKey key;
};

struct ProcessToken {
    std::uint16_t process_id = 0;
    OutPoint holding_output;
    std::uint64_t value = 0;
    EcKey holder_key;
    std::optional<Hash256> attached_data_hash;

    /// Redeem script locking the holding output.
    RedeemScript redeem() const { return {holder_key.key_hash(), attached_data_hash}; }
};

struct StartResult {
    Transaction tx;
    ProcessToken token;
};

struct SplitResult {
    Transaction tx;
    std::vector<ProcessToken> tokens;
};

struct JoinResult {
    Transaction tx;
    ProcessToken token;
};

/// What both sides agreed on in the negotiation.
struct HandoverTerms {
    std::uint16_t process_id = 0;
    TaskId task_id = 0;
    std::uint32_t timestamp = 0;
    Hash160 receiver_key_hash{};
    std::optional<Hash256> data_hash; // hash of the transferred process data
};

struct HandoverTemplate {
    Transaction tx;
    HandoverTerms terms;
};

/// Receiver-side knowledge used to validate a template.
struct ExpectedTerms {
    std::uint16_t process_id = 0;
    TaskId task_id = 0;
    std::uint32_t timestamp = 0;
    Hash160 receiver_key_hash{};
    std::optional<Hash256> received_data_hash;
    std::optional<Hash256> previous_data_hash;
    std::uint32_t skew = kTimestampSkew;
};

struct Accept {
    friend bool operator==(const Accept&, const Accept&) = default;
};

struct Reject {
    int check = 0; // 1..4
    std::string reason;
};

using TemplateVerdict = std::variant<Accept, Reject>;

inline bool accepted(const TemplateVerdict& v) { return std::holds_alternative<Accept>(v); }

/// Transactions needed after the start transaction, taking the costliest XOR
/// branch and funding each AND branch like the most expensive one. Includes
/// join feeders, the filler handover and the end transaction.
std::size_t estimate_tx_count(const ProcessModel& model);

class TxEngine {
public:
    explicit TxEngine(FeePolicy policy = {}, const ChainView* chain = nullptr) : policy_(policy), chain_(chain) {}

    const FeePolicy& policy() const { return policy_; }

    /// Funds come from largest to smallest until the token budget and the
    /// start fee are covered; surplus returns to `owner` as change.
    StartResult build_start(const std::vector<Spendable>& funds, std::uint32_t process_id, std::uint32_t now,
                            std::size_t estimated_tx_count, const EcKey& owner,
                            std::optional<Hash256> data_hash = std::nullopt) const;

    HandoverTemplate build_handover_template(const ProcessToken& token, TaskId next_task, std::uint32_t now,
                                             const Hash160& receiver_key_hash,
                                             std::optional<Hash256> data_hash) const;

    Bytes sign_as_receiver(const HandoverTemplate& tmpl, const EcKey& receiver) const;

    Transaction finalize_and_sign_as_sender(const HandoverTemplate& tmpl, ByteView receiver_signature,
                                            const PublicKey& receiver_public_key, const EcKey& sender) const;

    SplitResult build_split(const ProcessToken& token, std::size_t branch_count, std::uint32_t now) const;

    JoinResult build_join(const std::vector<ProcessToken>& tokens, std::uint32_t now, const EcKey& holder,
                          std::optional<Hash256> data_hash = std::nullopt) const;

    /// Residual value goes to `owner_key_hash`; a zero residual leaves only the
    /// data output. Extraordinary ends may be issued by any holder.
    Transaction build_end(const ProcessToken& token, std::uint32_t now, const Hash160& owner_key_hash,
                          bool extraordinary = false) const;

private:
    void require_unspent(const ProcessToken& token) const;
    static void sign_token_inputs(Transaction& tx, const std::vector<ProcessToken>& tokens);

    FeePolicy policy_;
    const ChainView* chain_;
};

/// The receiver's four checks. Throws UnresolvableAncestor when the chain
/// view cannot supply the transactions the checks depend on.
TemplateVerdict validate_template(const HandoverTemplate& tmpl, const ExpectedTerms& expected,
                                  const ProcessModel& model, const ChainView& chain);

/// Output a token transaction creates for `token`.
TxOutput token_output(const ProcessToken& token);

} // namespace chorchain
