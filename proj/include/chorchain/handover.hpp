#pragma once

#include "chorchain/chain.hpp"
#include "chorchain/crypto.hpp"
#include "chorchain/tx_engine.hpp"

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>

namespace chorchain {

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Frames ------------------------------------------------------------------------

enum class FrameType : std::uint8_t {
    Negotiate = 1,
    Data = 2,
    AddrAttest = 3,
    TemplateKey = 4,
    ReceiverSig = 5,
    Ack = 6,
    IdentityQuery = 7,
    IdentityReply = 8,
};

std::string_view to_string(FrameType type);

struct Frame {
    FrameType type = FrameType::Ack;
    Bytes payload;
};

/// u32 big-endian length of (type ‖ payload), then type, then payload.
Bytes encode_frame(const Frame& frame);
Frame decode_frame(ByteView bytes);

// PKI -------------------------------------------------------------------------------

struct Certificate {
    std::string subject;
    IdentityPublicKey key{};
    std::uint32_t not_before = 0;
    std::uint32_t not_after = 0;
    IdentitySignature issuer_signature{};

    Bytes signed_part() const;
    void write(ByteWriter& w) const;
    static Certificate read(ByteReader& r);
};

/// Empty string when valid at `now`, otherwise the reason.
std::string check_certificate(const Certificate& cert, const IdentityPublicKey& root, std::uint32_t now);

struct Participant {
    std::string name;
    IdentityKey identity;
    Certificate certificate;
    EcKey tx_key;
};

/// Self-signed issuer for every participant of a run.
class TrustRoot {
public:
    explicit TrustRoot(const Hash256& seed) : key_(IdentityKey::from_seed(seed)) {}

    const IdentityPublicKey& public_key() const { return key_.public_key(); }

    Certificate issue(const std::string& subject, const IdentityPublicKey& key, std::uint32_t not_before,
                      std::uint32_t not_after) const;

    /// Identity and transaction keys derived from `name` and the root seed.
    Participant enroll(const std::string& name, std::uint32_t not_before, std::uint32_t not_after) const;

private:
    IdentityKey key_;
};

using AttestationNonce = FixedBytes<16>;

struct AddressAttestation {
    Hash160 key_hash{};
    std::uint16_t process_id = 0;
    AttestationNonce nonce{};
    Certificate certificate;
    IdentitySignature signature{};

    static Bytes message(const Hash160& key_hash, std::uint16_t process_id, const AttestationNonce& nonce);
    static AddressAttestation make(const Participant& who, std::uint16_t process_id, const AttestationNonce& nonce);
    /// Empty string when signature and certificate verify.
    std::string check(const IdentityPublicKey& root, std::uint32_t now) const;

    void write(ByteWriter& w) const;
    static AddressAttestation read(ByteReader& r);
};

/// Remembers nonces a participant has accepted.
class ReplayGuard {
public:
    bool fresh(const AttestationNonce& nonce) { return seen_.insert(nonce).second; }

private:
    std::set<AttestationNonce> seen_;
};

// Messages ---------------------------------------------------------------------------

struct NegotiationTerms {
    std::uint16_t process_id = 0;
    TaskId task_id = 0;
    std::uint32_t deadline = 0;
    Hash256 reward_ref{};

    friend bool operator==(const NegotiationTerms&, const NegotiationTerms&) = default;
};

struct NegotiateMsg {
    NegotiationTerms terms;
    Certificate certificate;
    bool accept = true;
    std::string reason;
};

struct EncryptedProcessData {
    std::uint64_t key_id = 0;
    AeadNonce nonce{};
    Bytes sealed; // ciphertext ‖ tag
};

struct TemplateKeyMsg {
    Bytes tx;
    HandoverTerms terms;
    SymmetricKey key{};
    IdentitySignature signature{};

    Bytes signed_part() const;
};

struct ReceiverSigMsg {
    Bytes signature;
    PublicKey public_key{};
};

enum class AckCode : std::uint8_t { Ok = 0, Published = 1, Rejected = 2, Aborted = 3 };

struct AckMsg {
    AckCode code = AckCode::Ok;
    std::uint8_t check = 0;
    Hash256 tx_id{};
    std::string reason;
};

struct IdentityQueryMsg {
    Hash256 tx_id{};
};

struct IdentityReplyMsg {
    std::optional<AddressAttestation> attestation;
};

Frame to_frame(const NegotiateMsg& m);
Frame to_frame(const EncryptedProcessData& m);
Frame to_frame(const AddressAttestation& m);
Frame to_frame(const TemplateKeyMsg& m);
Frame to_frame(const ReceiverSigMsg& m);
Frame to_frame(const AckMsg& m);
Frame to_frame(const IdentityQueryMsg& m);
Frame to_frame(const IdentityReplyMsg& m);

NegotiateMsg negotiate_from(const Frame& f);
EncryptedProcessData data_from(const Frame& f);
AddressAttestation attestation_from(const Frame& f);
TemplateKeyMsg template_key_from(const Frame& f);
ReceiverSigMsg receiver_sig_from(const Frame& f);
AckMsg ack_from(const Frame& f);
IdentityQueryMsg identity_query_from(const Frame& f);
IdentityReplyMsg identity_reply_from(const Frame& f);

// Sessions ---------------------------------------------------------------------------

enum class SessionState { Idle, Negotiating, DataTransferred, AddressesExchanged, TemplateSent, ReceiverSigned, Published, Aborted };

std::string_view to_string(SessionState state);

enum class AbortReason { None, Identity, Negotiation, Attestation, Replay, Validation, ReceiverSignature, Broadcast, Timeout, Protocol };

std::string_view to_string(AbortReason reason);

/// Work done while handling one step; the driver turns it into simulated time.
struct StepEffort {
    std::size_t provider_queries = 0;
    std::size_t broadcasts = 0;
};

/// What the receiver keeps after signing: proof that a handover was intended.
struct HandoverProof {
    HandoverTemplate tmpl;
    IdentitySignature sender_signature{};
    Certificate sender_certificate;
    Bytes receiver_signature;
};

class Session {
public:
    virtual ~Session() = default;

    SessionState state() const { return state_; }
    AbortReason abort_reason() const { return abort_reason_; }
    const std::string& abort_detail() const { return abort_detail_; }
    bool terminal() const;
    /// Attestation received from the other side.
    const std::optional<AddressAttestation>& peer_attestation() const { return peer_attestation_; }
    const StepEffort& last_effort() const { return effort_; }

    virtual std::vector<Frame> on_frame(const Frame& frame, double now) = 0;
    std::vector<Frame> on_timeout();

protected:
    std::vector<Frame> abort(AbortReason reason, std::string detail, bool tell_peer = true);

    SessionState state_ = SessionState::Idle;
    AbortReason abort_reason_ = AbortReason::None;
    std::string abort_detail_;
    std::optional<AddressAttestation> peer_attestation_;
    std::optional<Certificate> peer_certificate_;
    StepEffort effort_;
};

struct SenderSetup {
    explicit SenderSetup(ProcessToken t) : token(std::move(t)) {}

    const Participant* self = nullptr;
    IdentityPublicKey trust_root{};
    ReplayGuard* replay = nullptr;
    ProcessToken token;
    NegotiationTerms terms;
    Bytes process_data;
    Hash160 owner_key_hash{};
    const TxEngine* engine = nullptr;
    std::function<BroadcastResult(const Transaction&)> broadcast;
    std::uint32_t epoch = 0;   // unix time at simulated second 0
    Hash256 entropy{};         // source of the data key, AEAD nonce and attestation nonce
    std::function<void(HandoverTemplate&)> tamper; // fault injection, applied after building
};

class SenderSession : public Session {
public:
    explicit SenderSession(SenderSetup setup);

    /// First frame (NEGOTIATE).
    std::vector<Frame> begin(double now);
    std::vector<Frame> on_frame(const Frame& frame, double now) override;

    const std::optional<Transaction>& published() const { return published_; }
    /// Extraordinary end issued after a receiver rejection.
    const std::optional<Transaction>& end_tx() const { return end_tx_; }
    int rejected_check() const { return rejected_check_; }
    const Hash256& data_hash() const { return data_hash_; }
    const SenderSetup& setup() const { return setup_; }

private:
    std::vector<Frame> on_negotiate(const NegotiateMsg& m, double now);
    std::vector<Frame> on_attestation(const AddressAttestation& a, double now);
    std::vector<Frame> on_receiver_sig(const ReceiverSigMsg& m, double now);
    std::vector<Frame> on_ack(const AckMsg& m, double now);
    std::uint32_t clock(double now) const { return setup_.epoch + static_cast<std::uint32_t>(now); }

    SenderSetup setup_;
    SymmetricKey key_{};
    Hash256 data_hash_{};
    std::optional<HandoverTemplate> template_;
    std::optional<Transaction> published_;
    std::optional<Transaction> end_tx_;
    int rejected_check_ = 0;
};

struct ReceiverSetup {
    const Participant* self = nullptr;
    IdentityPublicKey trust_root{};
    ReplayGuard* replay = nullptr;
    const ProcessModel* model = nullptr;
    const ChainView* chain = nullptr;
    std::uint32_t epoch = 0;
    Hash256 entropy{};
    std::function<bool(const NegotiationTerms&)> accept_terms; // default: accept
};

class ReceiverSession : public Session {
public:
    explicit ReceiverSession(ReceiverSetup setup);

    std::vector<Frame> on_frame(const Frame& frame, double now) override;

    const std::optional<NegotiationTerms>& terms() const { return terms_; }
    /// Decrypted process data, available once the template was accepted.
    const std::optional<Bytes>& process_data() const { return plaintext_; }
    const std::optional<HandoverProof>& proof() const { return proof_; }
    int rejected_check() const { return rejected_check_; }
    /// Tx id announced by the sender after publishing.
    const std::optional<Hash256>& published_id() const { return published_id_; }

private:
    std::vector<Frame> on_negotiate(const NegotiateMsg& m, double now);
    std::vector<Frame> on_template(const TemplateKeyMsg& m, double now);
    std::uint32_t clock(double now) const { return setup_.epoch + static_cast<std::uint32_t>(now); }

    ReceiverSetup setup_;
    std::optional<NegotiationTerms> terms_;
    std::optional<EncryptedProcessData> ciphertext_;
    std::optional<Bytes> plaintext_;
    std::optional<HandoverProof> proof_;
    std::optional<Hash256> published_id_;
    int rejected_check_ = 0;
};

// Transport and driver ----------------------------------------------------------------

struct ProtocolCosts {
    double frame = 0.002;
    double logic = 0.001;
    double provider_query = 0.005;
    double broadcast = 0.020;
    double timeout = 30.0;
};

struct PhaseTimes {
    double logic = 0.0;
    double provider = 0.0;
    double broadcast = 0.0;
    double confirmation = 0.0;

    double total() const { return logic + provider + broadcast + confirmation; }
    PhaseTimes& operator+=(const PhaseTimes& o);
};

/// Reliable in-process channel: frames are encoded, delayed by the frame
/// cost and decoded at the destination. `drop` discards matching frames.
class Transport {
public:
    using Handler = std::function<void(const Frame&)>;
    using DropHook = std::function<bool(int from, int to, const Frame&)>;

    Transport(EventLoop& loop, double latency) : loop_(loop), latency_(latency) {}

    int attach(Handler handler);
    void detach(int endpoint);
    void send(int from, int to, const Frame& frame);

    void set_drop_hook(DropHook hook) { drop_ = std::move(hook); }
    std::size_t frames_sent() const { return frames_; }
    std::size_t bytes_sent() const { return bytes_; }

private:
    EventLoop& loop_;
    double latency_;
    std::map<int, Handler> endpoints_;
    int next_id_ = 0;
    DropHook drop_;
    std::size_t frames_ = 0;
    std::size_t bytes_ = 0;
};

/// Runs one handover on the loop. `done` fires once the sender session is
/// terminal; both sessions must stay alive until then. Time spent is added
/// to `phases`.
void run_handover(EventLoop& loop, Transport& transport, const ProtocolCosts& costs,
                  std::shared_ptr<SenderSession> sender, std::shared_ptr<ReceiverSession> receiver,
                  PhaseTimes& phases, std::function<void()> done);

/// Convenience for tests: runs a handover to completion on a private loop step.
void run_handover_blocking(EventLoop& loop, Transport& transport, const ProtocolCosts& costs,
                           const std::shared_ptr<SenderSession>& sender,
                           const std::shared_ptr<ReceiverSession>& receiver, PhaseTimes& phases);

// Owner monitoring -----------------------------------------------------------------------

/// A participant's store of the attestations it collected as a sender.
class IdentityResponder {
public:
    void record(const Hash256& handover_tx, const AddressAttestation& receiver_attestation);
    void set_online(bool online) { online_ = online; }
    bool online() const { return online_; }
    /// nullopt while offline.
    std::optional<Frame> answer(const Frame& query) const;

private:
    std::map<Hash256, AddressAttestation> store_;
    bool online_ = true;
};

struct LearnedIdentity {
    Hash256 handover_tx{};
    TaskId task_id = 0;
    std::string subject;
    Hash160 key_hash{};
};

struct CollectionGap {
    Hash256 handover_tx{};
    std::string reason;
};

struct CollectReport {
    std::vector<LearnedIdentity> learned;
    std::vector<CollectionGap> gaps;
};

/// Pull-based identity collection over the handovers of one instance. Each
/// call reports only handovers not seen by earlier calls.
class OwnerMonitor {
public:
    OwnerMonitor(const Participant& owner, IdentityPublicKey trust_root, const ChainView& chain,
                 const Hash256& start_tx, std::map<std::string, const IdentityResponder*> registry);

    CollectReport collect(std::uint32_t now);

    /// Key hash → certificate subject, as learned so far.
    const std::map<Hash160, std::string>& identities() const { return identities_; }
    std::size_t queries() const { return queries_; }

private:
    std::optional<AddressAttestation> ask(const std::string& who, const Hash256& tx_id);

    const Participant& owner_;
    IdentityPublicKey root_;
    const ChainView& chain_;
    Hash256 start_;
    std::map<std::string, const IdentityResponder*> registry_;
    std::map<Hash160, std::string> identities_;
    std::set<Hash256> seen_;
    std::size_t queries_ = 0;
};

} // namespace chorchain
