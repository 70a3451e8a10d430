#include "chorchain/handover.hpp"

#include "chorchain/provider.hpp"
#include "chorchain/trace.hpp"

#include <algorithm>

namespace chorchain {

// Frames ------------------------------------------------------------------------

std::string_view to_string(FrameType type)
{
    switch (type) {
    case FrameType::Negotiate: return "NEGOTIATE";
    case FrameType::Data: return "DATA";
    case FrameType::AddrAttest: return "ADDR_ATTEST";
    case FrameType::TemplateKey: return "TEMPLATE_KEY";
    case FrameType::ReceiverSig: return "RECEIVER_SIG";
    case FrameType::Ack: return "ACK";
    case FrameType::IdentityQuery: return "IDENTITY_QUERY";
    case FrameType::IdentityReply: return "IDENTITY_REPLY";
    }
    return "?";
}

Bytes encode_frame(const Frame& frame)
{
    ByteWriter w;
    w.u32be(static_cast<std::uint32_t>(frame.payload.size() + 1));
    w.u8(static_cast<std::uint8_t>(frame.type));
    w.bytes(frame.payload);
    return std::move(w).take();
}

Frame decode_frame(ByteView bytes)
{
    try {
        ByteReader r(bytes);
        const std::uint32_t len = r.u32be();
        if (len == 0 || len != r.remaining())
            throw ProtocolError("frame length " + std::to_string(len) + " does not match " +
                                std::to_string(r.remaining()) + " bytes");
        const std::uint8_t type = r.u8();
        if (type < 1 || type > 8)
            throw ProtocolError("unknown frame type " + std::to_string(type));
        return {static_cast<FrameType>(type), r.bytes(len - 1)};
    } catch (const TruncatedInput&) {
        throw ProtocolError("truncated frame");
    }
}

namespace {

void write_string(ByteWriter& w, const std::string& s) { w.var_bytes(view(s)); }

std::string read_string(ByteReader& r)
{
    Bytes b = r.var_bytes(4096);
    return {b.begin(), b.end()};
}

void expect(const Frame& f, FrameType type)
{
    if (f.type != type)
        throw ProtocolError("expected " + std::string(to_string(type)) + ", got " + std::string(to_string(f.type)));
}

template <typename F>
auto parse(const Frame& f, FrameType type, F&& body)
{
    expect(f, type);
    try {
        ByteReader r(f.payload);
        auto out = body(r);
        if (!r.empty())
            throw ProtocolError(std::string(to_string(type)) + " has trailing bytes");
        return out;
    } catch (const TruncatedInput&) {
        throw ProtocolError(std::string(to_string(type)) + " payload truncated");
    }
}

template <typename F>
Frame build(FrameType type, F&& body)
{
    ByteWriter w;
    body(w);
    return {type, std::move(w).take()};
}

Hash256 derive(const Hash256& entropy, std::string_view label)
{
    return hmac_sha256(view(entropy), view(label));
}

template <std::size_t N>
FixedBytes<N> prefix(const Hash256& h)
{
    FixedBytes<N> out{};
    std::copy_n(h.begin(), N, out.begin());
    return out;
}

void write_terms(ByteWriter& w, const HandoverTerms& t)
{
    w.u16be(t.process_id);
    w.u8(t.task_id);
    w.u32be(t.timestamp);
    w.bytes(t.receiver_key_hash);
    w.u8(t.data_hash ? 1 : 0);
    if (t.data_hash)
        w.bytes(*t.data_hash);
}

HandoverTerms read_terms(ByteReader& r)
{
    HandoverTerms t;
    t.process_id = r.u16be();
    t.task_id = r.u8();
    t.timestamp = r.u32be();
    t.receiver_key_hash = r.fixed<20>();
    if (r.u8())
        t.data_hash = r.fixed<32>();
    return t;
}

Bytes aead_context(std::uint16_t process_id, TaskId task, std::uint64_t key_id)
{
    ByteWriter w;
    w.bytes(view(std::string_view("chorchain-data")));
    w.u16be(process_id);
    w.u8(task);
    w.u64be(key_id);
    return std::move(w).take();
}

} // namespace

// PKI ----------------------------------------------------------------------------------

Bytes Certificate::signed_part() const
{
    ByteWriter w;
    w.bytes(view(std::string_view("chorchain-cert")));
    write_string(w, subject);
    w.bytes(key);
    w.u32be(not_before);
    w.u32be(not_after);
    return std::move(w).take();
}

void Certificate::write(ByteWriter& w) const
{
    write_string(w, subject);
    w.bytes(key);
    w.u32be(not_before);
    w.u32be(not_after);
    w.bytes(issuer_signature);
}

Certificate Certificate::read(ByteReader& r)
{
    Certificate c;
    c.subject = read_string(r);
    c.key = r.fixed<32>();
    c.not_before = r.u32be();
    c.not_after = r.u32be();
    c.issuer_signature = r.fixed<64>();
    return c;
}

std::string check_certificate(const Certificate& cert, const IdentityPublicKey& root, std::uint32_t now)
{
    if (!verify_identity_signature(root, cert.signed_part(), cert.issuer_signature))
        return "certificate of '" + cert.subject + "' is not signed by the trust root";
    if (now < cert.not_before)
        return "certificate of '" + cert.subject + "' not yet valid";
    if (now > cert.not_after)
        return "certificate of '" + cert.subject + "' expired";
    return {};
}

Certificate TrustRoot::issue(const std::string& subject, const IdentityPublicKey& key, std::uint32_t not_before,
                             std::uint32_t not_after) const
{
    Certificate c{subject, key, not_before, not_after, {}};
    c.issuer_signature = key_.sign(c.signed_part());
    return c;
}

Participant TrustRoot::enroll(const std::string& name, std::uint32_t not_before, std::uint32_t not_after) const
{
    ByteWriter seed;
    seed.bytes(key_.public_key());
    write_string(seed, name);
    const Hash256 base = sha256(seed.data());
    IdentityKey identity = IdentityKey::from_seed(derive(base, "identity"));
    Certificate cert = issue(name, identity.public_key(), not_before, not_after);
    EcKey tx_key = EcKey::derive(view(derive(base, "tx-key")));
    return {name, std::move(identity), std::move(cert), std::move(tx_key)};
}

Bytes AddressAttestation::message(const Hash160& key_hash, std::uint16_t process_id, const AttestationNonce& nonce)
{
    ByteWriter w;
    w.bytes(view(std::string_view("chorchain-addr")));
    w.bytes(key_hash);
    w.u16be(process_id);
    w.bytes(nonce);
    return std::move(w).take();
}

AddressAttestation AddressAttestation::make(const Participant& who, std::uint16_t process_id,
                                            const AttestationNonce& nonce)
{
    AddressAttestation a{who.tx_key.key_hash(), process_id, nonce, who.certificate, {}};
    a.signature = who.identity.sign(message(a.key_hash, process_id, nonce));
    return a;
}

std::string AddressAttestation::check(const IdentityPublicKey& root, std::uint32_t now) const
{
    if (auto err = check_certificate(certificate, root, now); !err.empty())
        return err;
    if (!verify_identity_signature(certificate.key, message(key_hash, process_id, nonce), signature))
        return "attestation signature does not verify under the certificate of '" + certificate.subject + "'";
    return {};
}

void AddressAttestation::write(ByteWriter& w) const
{
    w.bytes(key_hash);
    w.u16be(process_id);
    w.bytes(nonce);
    certificate.write(w);
    w.bytes(signature);
}

AddressAttestation AddressAttestation::read(ByteReader& r)
{
    AddressAttestation a;
    a.key_hash = r.fixed<20>();
    a.process_id = r.u16be();
    a.nonce = r.fixed<16>();
    a.certificate = Certificate::read(r);
    a.signature = r.fixed<64>();
    return a;
}

// Messages ---------------------------------------------------------------------------------

Bytes TemplateKeyMsg::signed_part() const
{
    ByteWriter w;
    w.bytes(view(std::string_view("chorchain-template")));
    w.var_bytes(tx);
    write_terms(w, terms);
    w.bytes(key);
    return std::move(w).take();
}

Frame to_frame(const NegotiateMsg& m)
{
    return build(FrameType::Negotiate, [&](ByteWriter& w) {
        w.u16be(m.terms.process_id);
        w.u8(m.terms.task_id);
        w.u32be(m.terms.deadline);
        w.bytes(m.terms.reward_ref);
        m.certificate.write(w);
        w.u8(m.accept ? 1 : 0);
        write_string(w, m.reason);
    });
}

NegotiateMsg negotiate_from(const Frame& f)
{
    return parse(f, FrameType::Negotiate, [](ByteReader& r) {
        NegotiateMsg m;
        m.terms.process_id = r.u16be();
        m.terms.task_id = r.u8();
        m.terms.deadline = r.u32be();
        m.terms.reward_ref = r.fixed<32>();
        m.certificate = Certificate::read(r);
        m.accept = r.u8() != 0;
        m.reason = read_string(r);
        return m;
    });
}

Frame to_frame(const EncryptedProcessData& m)
{
    return build(FrameType::Data, [&](ByteWriter& w) {
        w.u64be(m.key_id);
        w.bytes(m.nonce);
        w.var_bytes(m.sealed);
    });
}

EncryptedProcessData data_from(const Frame& f)
{
    return parse(f, FrameType::Data, [](ByteReader& r) {
        EncryptedProcessData m;
        m.key_id = r.u64be();
        m.nonce = r.fixed<12>();
        m.sealed = r.var_bytes();
        return m;
    });
}

Frame to_frame(const AddressAttestation& m)
{
    return build(FrameType::AddrAttest, [&](ByteWriter& w) { m.write(w); });
}

AddressAttestation attestation_from(const Frame& f)
{
    return parse(f, FrameType::AddrAttest, [](ByteReader& r) { return AddressAttestation::read(r); });
}

Frame to_frame(const TemplateKeyMsg& m)
{
    return build(FrameType::TemplateKey, [&](ByteWriter& w) {
        w.var_bytes(m.tx);
        write_terms(w, m.terms);
        w.bytes(m.key);
        w.bytes(m.signature);
    });
}

TemplateKeyMsg template_key_from(const Frame& f)
{
    return parse(f, FrameType::TemplateKey, [](ByteReader& r) {
        TemplateKeyMsg m;
        m.tx = r.var_bytes();
        m.terms = read_terms(r);
        m.key = r.fixed<32>();
        m.signature = r.fixed<64>();
        return m;
    });
}

Frame to_frame(const ReceiverSigMsg& m)
{
    return build(FrameType::ReceiverSig, [&](ByteWriter& w) {
        w.var_bytes(m.signature);
        w.bytes(m.public_key);
    });
}

ReceiverSigMsg receiver_sig_from(const Frame& f)
{
    return parse(f, FrameType::ReceiverSig, [](ByteReader& r) {
        ReceiverSigMsg m;
        m.signature = r.var_bytes(kMaxSignatureField);
        m.public_key = r.fixed<33>();
        return m;
    });
}

Frame to_frame(const AckMsg& m)
{
    return build(FrameType::Ack, [&](ByteWriter& w) {
        w.u8(static_cast<std::uint8_t>(m.code));
        w.u8(m.check);
        w.bytes(m.tx_id);
        write_string(w, m.reason);
    });
}

AckMsg ack_from(const Frame& f)
{
    return parse(f, FrameType::Ack, [](ByteReader& r) {
        AckMsg m;
        const std::uint8_t code = r.u8();
        if (code > 3)
            throw ProtocolError("unknown ACK code " + std::to_string(code));
        m.code = static_cast<AckCode>(code);
        m.check = r.u8();
        m.tx_id = r.fixed<32>();
        m.reason = read_string(r);
        return m;
    });
}

Frame to_frame(const IdentityQueryMsg& m)
{
    return build(FrameType::IdentityQuery, [&](ByteWriter& w) { w.bytes(m.tx_id); });
}

IdentityQueryMsg identity_query_from(const Frame& f)
{
    return parse(f, FrameType::IdentityQuery, [](ByteReader& r) { return IdentityQueryMsg{r.fixed<32>()}; });
}

Frame to_frame(const IdentityReplyMsg& m)
{
    return build(FrameType::IdentityReply, [&](ByteWriter& w) {
        w.u8(m.attestation ? 1 : 0);
        if (m.attestation)
            m.attestation->write(w);
    });
}

IdentityReplyMsg identity_reply_from(const Frame& f)
{
    return parse(f, FrameType::IdentityReply, [](ByteReader& r) {
        IdentityReplyMsg m;
        if (r.u8())
            m.attestation = AddressAttestation::read(r);
        return m;
    });
}

// Sessions ---------------------------------------------------------------------------------

std::string_view to_string(SessionState state)
{
    switch (state) {
    case SessionState::Idle: return "Idle";
    case SessionState::Negotiating: return "Negotiating";
    case SessionState::DataTransferred: return "DataTransferred";
    case SessionState::AddressesExchanged: return "AddressesExchanged";
    case SessionState::TemplateSent: return "TemplateSent";
    case SessionState::ReceiverSigned: return "ReceiverSigned";
    case SessionState::Published: return "Published";
    case SessionState::Aborted: return "Aborted";
    }
    return "?";
}

std::string_view to_string(AbortReason reason)
{
    switch (reason) {
    case AbortReason::None: return "none";
    case AbortReason::Identity: return "identity";
    case AbortReason::Negotiation: return "negotiation";
    case AbortReason::Attestation: return "attestation";
    case AbortReason::Replay: return "replay";
    case AbortReason::Validation: return "validation";
    case AbortReason::ReceiverSignature: return "receiver-signature";
    case AbortReason::Broadcast: return "broadcast";
    case AbortReason::Timeout: return "timeout";
    case AbortReason::Protocol: return "protocol";
    }
    return "?";
}

bool Session::terminal() const
{
    return state_ == SessionState::Aborted || state_ == SessionState::Published;
}

std::vector<Frame> Session::on_timeout()
{
    if (terminal())
        return {};
    return abort(AbortReason::Timeout, "no answer in " + std::string(to_string(state_)));
}

std::vector<Frame> Session::abort(AbortReason reason, std::string detail, bool tell_peer)
{
    state_ = SessionState::Aborted;
    abort_reason_ = reason;
    abort_detail_ = std::move(detail);
    if (!tell_peer)
        return {};
    return {to_frame(AckMsg{AckCode::Aborted, 0, {}, std::string(to_string(reason)) + ": " + abort_detail_})};
}

SenderSession::SenderSession(SenderSetup setup) : setup_(std::move(setup))
{
    if (!setup_.self || !setup_.engine || !setup_.broadcast)
        throw std::invalid_argument("sender session needs identity, engine and broadcast");
    key_ = derive(setup_.entropy, "data-key");
    data_hash_ = sha256(setup_.process_data);
}

std::vector<Frame> SenderSession::begin(double now)
{
    effort_ = {};
    if (state_ != SessionState::Idle)
        throw std::logic_error("sender session already started");
    if (auto err = check_certificate(setup_.self->certificate, setup_.trust_root, clock(now)); !err.empty())
        return abort(AbortReason::Identity, err, false);
    state_ = SessionState::Negotiating;
    return {to_frame(NegotiateMsg{setup_.terms, setup_.self->certificate, true, {}})};
}

std::vector<Frame> SenderSession::on_frame(const Frame& frame, double now)
{
    effort_ = {};
    if (terminal())
        return {};
    try {
        switch (frame.type) {
        case FrameType::Negotiate: return on_negotiate(negotiate_from(frame), now);
        case FrameType::AddrAttest: return on_attestation(attestation_from(frame), now);
        case FrameType::ReceiverSig: return on_receiver_sig(receiver_sig_from(frame), now);
        case FrameType::Ack: return on_ack(ack_from(frame), now);
        default: return abort(AbortReason::Protocol, "unexpected " + std::string(to_string(frame.type)));
        }
    } catch (const ProtocolError& e) {
        return abort(AbortReason::Protocol, e.what());
    }
}

std::vector<Frame> SenderSession::on_negotiate(const NegotiateMsg& m, double now)
{
    if (state_ != SessionState::Negotiating)
        return abort(AbortReason::Protocol, "NEGOTIATE outside negotiation");
    if (!m.accept)
        return abort(AbortReason::Negotiation, "receiver declined: " + m.reason, false);
    if (m.terms != setup_.terms)
        return abort(AbortReason::Negotiation, "receiver answered with different terms");
    if (auto err = check_certificate(m.certificate, setup_.trust_root, clock(now)); !err.empty())
        return abort(AbortReason::Identity, err);
    peer_certificate_ = m.certificate;

    // Step 2: data goes out encrypted under a key the receiver does not have yet.
    EncryptedProcessData data;
    const Hash256 id = derive(setup_.entropy, "key-id");
    data.key_id = ByteReader(view(id)).u64be();
    data.nonce = prefix<12>(derive(setup_.entropy, "data-nonce"));
    data.sealed = aead_seal(key_, data.nonce, setup_.process_data,
                            aead_context(setup_.terms.process_id, setup_.terms.task_id, data.key_id));
    state_ = SessionState::DataTransferred;

    // Step 3: our address, signed with our identity.
    const auto att = AddressAttestation::make(*setup_.self, setup_.terms.process_id,
                                              prefix<16>(derive(setup_.entropy, "attest-nonce")));
    return {to_frame(data), to_frame(att)};
}

std::vector<Frame> SenderSession::on_attestation(const AddressAttestation& a, double now)
{
    if (state_ != SessionState::DataTransferred)
        return abort(AbortReason::Protocol, "ADDR_ATTEST out of order");
    if (auto err = a.check(setup_.trust_root, clock(now)); !err.empty())
        return abort(AbortReason::Attestation, err);
    if (!peer_certificate_ || a.certificate.key != peer_certificate_->key)
        return abort(AbortReason::Attestation, "attestation signed by a different identity than negotiated");
    if (a.process_id != setup_.terms.process_id)
        return abort(AbortReason::Attestation, "attestation names another process");
    if (setup_.replay && !setup_.replay->fresh(a.nonce))
        return abort(AbortReason::Replay, "attestation nonce seen before");
    peer_attestation_ = a;
    state_ = SessionState::AddressesExchanged;

    // Step 4: template. Step 5: template and key, under our identity signature.
    HandoverTemplate tmpl;
    try {
        tmpl = setup_.engine->build_handover_template(setup_.token, setup_.terms.task_id, clock(now), a.key_hash,
                                                      data_hash_);
    } catch (const std::exception& e) {
        return abort(AbortReason::Protocol, std::string("cannot build template: ") + e.what());
    }
    if (setup_.tamper)
        setup_.tamper(tmpl);
    template_ = tmpl;

    TemplateKeyMsg msg;
    try {
        msg.tx = tmpl.tx.serialize();
    } catch (const WireError& e) {
        return abort(AbortReason::Protocol, std::string("template does not serialize: ") + e.what());
    }
    msg.terms = tmpl.terms;
    msg.key = key_;
    msg.signature = setup_.self->identity.sign(msg.signed_part());
    state_ = SessionState::TemplateSent;
    return {to_frame(msg)};
}

std::vector<Frame> SenderSession::on_receiver_sig(const ReceiverSigMsg& m, double /*now*/)
{
    if (state_ != SessionState::TemplateSent)
        return abort(AbortReason::Protocol, "RECEIVER_SIG before the template");
    if (hash160(view(m.public_key)) != peer_attestation_->key_hash)
        return abort(AbortReason::ReceiverSignature, "signing key is not the attested address");
    Transaction tx;
    try {
        tx = setup_.engine->finalize_and_sign_as_sender(*template_, m.signature, m.public_key,
                                                        setup_.token.holder_key);
    } catch (const std::exception& e) {
        return abort(AbortReason::ReceiverSignature, e.what());
    }
    // Step 6.
    ++effort_.broadcasts;
    auto res = setup_.broadcast(tx);
    if (!res.ok())
        return abort(AbortReason::Broadcast, std::string(to_string(res.status)) + ": " + res.reason);
    published_ = tx;
    state_ = SessionState::Published;
    return {to_frame(AckMsg{AckCode::Published, 0, tx.tx_id(), {}})};
}

std::vector<Frame> SenderSession::on_ack(const AckMsg& m, double now)
{
    if (m.code == AckCode::Rejected) {
        rejected_check_ = m.check;
        try {
            Transaction end = setup_.engine->build_end(setup_.token, clock(now), setup_.owner_key_hash, true);
            ++effort_.broadcasts;
            if (setup_.broadcast(end).ok())
                end_tx_ = std::move(end);
        } catch (const std::exception&) {
            // token already gone; nothing left to end
        }
        return abort(AbortReason::Validation, "check " + std::to_string(m.check) + ": " + m.reason, false);
    }
    if (m.code == AckCode::Aborted)
        return abort(AbortReason::Protocol, "receiver aborted: " + m.reason, false);
    return {};
}

ReceiverSession::ReceiverSession(ReceiverSetup setup) : setup_(std::move(setup))
{
    if (!setup_.self || !setup_.model || !setup_.chain)
        throw std::invalid_argument("receiver session needs identity, model and chain view");
}

std::vector<Frame> ReceiverSession::on_frame(const Frame& frame, double now)
{
    effort_ = {};
    if (terminal())
        return {};
    if (state_ == SessionState::ReceiverSigned) {
        if (frame.type == FrameType::Ack) {
            const AckMsg m = ack_from(frame);
            if (m.code == AckCode::Published)
                published_id_ = m.tx_id;
        }
        return {};
    }
    try {
        switch (frame.type) {
        case FrameType::Negotiate: return on_negotiate(negotiate_from(frame), now);
        case FrameType::Data:
            if (state_ != SessionState::Negotiating)
                return abort(AbortReason::Protocol, "DATA out of order");
            ciphertext_ = data_from(frame);
            state_ = SessionState::DataTransferred;
            return {};
        case FrameType::AddrAttest: {
            if (state_ != SessionState::DataTransferred)
                return abort(AbortReason::Protocol, "ADDR_ATTEST out of order");
            const AddressAttestation a = attestation_from(frame);
            if (auto err = a.check(setup_.trust_root, clock(now)); !err.empty())
                return abort(AbortReason::Attestation, err);
            if (a.certificate.key != peer_certificate_->key)
                return abort(AbortReason::Attestation, "attestation signed by a different identity than negotiated");
            if (a.process_id != terms_->process_id)
                return abort(AbortReason::Attestation, "attestation names another process");
            if (setup_.replay && !setup_.replay->fresh(a.nonce))
                return abort(AbortReason::Replay, "attestation nonce seen before");
            peer_attestation_ = a;
            state_ = SessionState::AddressesExchanged;
            return {to_frame(AddressAttestation::make(*setup_.self, terms_->process_id,
                                                      prefix<16>(derive(setup_.entropy, "attest-nonce"))))};
        }
        case FrameType::TemplateKey:
            if (state_ != SessionState::AddressesExchanged)
                return abort(AbortReason::Protocol, "TEMPLATE_KEY out of order");
            return on_template(template_key_from(frame), now);
        case FrameType::Ack: {
            const AckMsg m = ack_from(frame);
            if (m.code == AckCode::Aborted)
                return abort(AbortReason::Protocol, "sender aborted: " + m.reason, false);
            return {};
        }
        default: return abort(AbortReason::Protocol, "unexpected " + std::string(to_string(frame.type)));
        }
    } catch (const ProtocolError& e) {
        return abort(AbortReason::Protocol, e.what());
    }
}

std::vector<Frame> ReceiverSession::on_negotiate(const NegotiateMsg& m, double now)
{
    if (state_ != SessionState::Idle)
        return abort(AbortReason::Protocol, "second NEGOTIATE");
    state_ = SessionState::Negotiating;
    if (auto err = check_certificate(m.certificate, setup_.trust_root, clock(now)); !err.empty()) {
        abort(AbortReason::Identity, err, false);
        return {to_frame(NegotiateMsg{m.terms, setup_.self->certificate, false, err})};
    }
    if (setup_.accept_terms && !setup_.accept_terms(m.terms)) {
        abort(AbortReason::Negotiation, "terms declined", false);
        return {to_frame(NegotiateMsg{m.terms, setup_.self->certificate, false, "terms declined"})};
    }
    peer_certificate_ = m.certificate;
    terms_ = m.terms;
    return {to_frame(NegotiateMsg{m.terms, setup_.self->certificate, true, {}})};
}

std::vector<Frame> ReceiverSession::on_template(const TemplateKeyMsg& m, double now)
{
    if (!verify_identity_signature(peer_certificate_->key, m.signed_part(), m.signature))
        return abort(AbortReason::Identity, "template is not signed by the negotiated sender");

    auto reject = [&](int check, const std::string& reason) {
        rejected_check_ = check;
        abort(AbortReason::Validation, "check " + std::to_string(check) + ": " + reason, false);
        return std::vector<Frame>{to_frame(AckMsg{AckCode::Rejected, static_cast<std::uint8_t>(check), {}, reason})};
    };

    HandoverTemplate tmpl;
    tmpl.terms = m.terms;
    try {
        tmpl.tx = Transaction::deserialize(m.tx);
    } catch (const WireError& e) {
        return reject(3, std::string("template: ") + e.what());
    }

    auto plain = aead_open(m.key, ciphertext_->nonce, ciphertext_->sealed,
                           aead_context(terms_->process_id, terms_->task_id, ciphertext_->key_id));
    if (!plain)
        return reject(2, "process data does not authenticate under the delivered key");

    ExpectedTerms expected;
    expected.process_id = terms_->process_id;
    expected.task_id = terms_->task_id;
    expected.timestamp = clock(now);
    expected.receiver_key_hash = setup_.self->tx_key.key_hash();
    expected.received_data_hash = sha256(*plain);

    const auto* counted = dynamic_cast<const ProviderChainView*>(setup_.chain);
    const std::size_t before = counted ? counted->queries() : 0;
    TemplateVerdict verdict;
    try {
        verdict = validate_template(tmpl, expected, *setup_.model, *setup_.chain);
    } catch (const UnresolvableAncestor& e) {
        verdict = Reject{1, e.what()};
    } catch (const LineageError& e) {
        verdict = Reject{4, e.what()};
    } catch (const ProviderError& e) {
        verdict = Reject{1, e.what()};
    }
    effort_.provider_queries = counted ? counted->queries() - before : 0;
    if (auto* r = std::get_if<Reject>(&verdict))
        return reject(r->check, r->reason);

    TxEngine signer;
    Bytes sig = signer.sign_as_receiver(tmpl, setup_.self->tx_key);
    plaintext_ = std::move(*plain);
    proof_ = HandoverProof{tmpl, m.signature, *peer_certificate_, sig};
    state_ = SessionState::ReceiverSigned;
    return {to_frame(ReceiverSigMsg{sig, setup_.self->tx_key.public_key()})};
}

// Transport and driver ------------------------------------------------------------------

PhaseTimes& PhaseTimes::operator+=(const PhaseTimes& o)
{
    logic += o.logic;
    provider += o.provider;
    broadcast += o.broadcast;
    confirmation += o.confirmation;
    return *this;
}

int Transport::attach(Handler handler)
{
    const int id = next_id_++;
    endpoints_[id] = std::move(handler);
    return id;
}

void Transport::detach(int endpoint) { endpoints_.erase(endpoint); }

void Transport::send(int from, int to, const Frame& frame)
{
    if (drop_ && drop_(from, to, frame))
        return;
    Bytes wire = encode_frame(frame);
    ++frames_;
    bytes_ += wire.size();
    loop_.schedule_after(latency_, [this, to, wire = std::move(wire)] {
        auto it = endpoints_.find(to);
        if (it == endpoints_.end())
            return;
        Handler h = it->second; // the handler may detach itself
        h(decode_frame(wire));
    });
}

namespace {

// Long enough for the sender's last frame to reach the receiver.
double settle_time(const ProtocolCosts& c) { return c.logic + c.broadcast + 2 * c.frame; }

struct HandoverRun : std::enable_shared_from_this<HandoverRun> {
    EventLoop& loop;
    Transport& transport;
    ProtocolCosts costs;
    std::shared_ptr<SenderSession> sender;
    std::shared_ptr<ReceiverSession> receiver;
    PhaseTimes& phases;
    std::function<void()> done;
    int sender_ep = -1;
    int receiver_ep = -1;
    std::uint64_t sender_steps = 0;
    std::uint64_t receiver_steps = 0;
    bool finished = false;

    HandoverRun(EventLoop& l, Transport& t, ProtocolCosts c, std::shared_ptr<SenderSession> s,
                std::shared_ptr<ReceiverSession> r, PhaseTimes& p, std::function<void()> d)
        : loop(l), transport(t), costs(c), sender(std::move(s)), receiver(std::move(r)), phases(p), done(std::move(d))
    {
    }

    double charge(const StepEffort& e)
    {
        const double logic = costs.logic;
        const double provider = costs.provider_query * static_cast<double>(e.provider_queries);
        const double broadcast = costs.broadcast * static_cast<double>(e.broadcasts);
        phases.logic += logic;
        phases.provider += provider;
        phases.broadcast += broadcast;
        return logic + provider + broadcast;
    }

    void emit(int from, int to, std::vector<Frame> frames, double delay)
    {
        if (frames.empty())
            return;
        phases.logic += costs.frame * static_cast<double>(frames.size());
        auto self = shared_from_this();
        loop.schedule_after(delay, [self, from, to, frames = std::move(frames)] {
            for (const auto& f : frames)
                self->transport.send(from, to, f);
        });
    }

    void arm_timeout(bool for_sender)
    {
        auto self = shared_from_this();
        const std::uint64_t mark = for_sender ? sender_steps : receiver_steps;
        loop.schedule_after(costs.timeout, [self, for_sender, mark] {
            Session& s = for_sender ? static_cast<Session&>(*self->sender) : *self->receiver;
            const std::uint64_t steps = for_sender ? self->sender_steps : self->receiver_steps;
            if (steps != mark || s.terminal() || s.state() == SessionState::ReceiverSigned)
                return;
            auto out = s.on_timeout();
            if (for_sender)
                self->emit(self->sender_ep, self->receiver_ep, std::move(out), 0.0);
            else
                self->emit(self->receiver_ep, self->sender_ep, std::move(out), 0.0);
            self->check_done();
        });
    }

    void check_done()
    {
        if (finished || !sender->terminal())
            return;
        finished = true;
        // Late frames (the final ACK) still reach the receiver.
        auto self = shared_from_this();
        loop.schedule_after(settle_time(costs), [self] {
            self->transport.detach(self->sender_ep);
            self->transport.detach(self->receiver_ep);
        });
        if (done)
            done();
    }

    void start()
    {
        auto self = shared_from_this();
        sender_ep = transport.attach([self](const Frame& f) {
            ++self->sender_steps;
            auto out = self->sender->on_frame(f, self->loop.now());
            const double delay = self->charge(self->sender->last_effort());
            self->emit(self->sender_ep, self->receiver_ep, std::move(out), delay);
            if (!self->sender->terminal())
                self->arm_timeout(true);
            self->check_done();
        });
        receiver_ep = transport.attach([self](const Frame& f) {
            ++self->receiver_steps;
            auto out = self->receiver->on_frame(f, self->loop.now());
            const double delay = self->charge(self->receiver->last_effort());
            self->emit(self->receiver_ep, self->sender_ep, std::move(out), delay);
            if (!self->receiver->terminal())
                self->arm_timeout(false);
        });
        auto out = sender->begin(loop.now());
        const double delay = charge(sender->last_effort());
        emit(sender_ep, receiver_ep, std::move(out), delay);
        if (!sender->terminal()) {
            arm_timeout(true);
            arm_timeout(false);
        }
        check_done();
    }
};

} // namespace

void run_handover(EventLoop& loop, Transport& transport, const ProtocolCosts& costs,
                  std::shared_ptr<SenderSession> sender, std::shared_ptr<ReceiverSession> receiver,
                  PhaseTimes& phases, std::function<void()> done)
{
    auto run = std::make_shared<HandoverRun>(loop, transport, costs, std::move(sender), std::move(receiver), phases,
                                             std::move(done));
    run->start();
}

void run_handover_blocking(EventLoop& loop, Transport& transport, const ProtocolCosts& costs,
                           const std::shared_ptr<SenderSession>& sender,
                           const std::shared_ptr<ReceiverSession>& receiver, PhaseTimes& phases)
{
    bool finished = false;
    run_handover(loop, transport, costs, sender, receiver, phases, [&] { finished = true; });
    loop.run_until([&] { return finished; });
    // deliver the trailing ACK
    loop.run_to(loop.now() + settle_time(costs));
}

// Owner monitoring --------------------------------------------------------------------------

void IdentityResponder::record(const Hash256& handover_tx, const AddressAttestation& receiver_attestation)
{
    store_[handover_tx] = receiver_attestation;
}

std::optional<Frame> IdentityResponder::answer(const Frame& query) const
{
    if (!online_)
        return std::nullopt;
    const auto q = identity_query_from(query);
    IdentityReplyMsg reply;
    if (auto it = store_.find(q.tx_id); it != store_.end())
        reply.attestation = it->second;
    return to_frame(reply);
}

OwnerMonitor::OwnerMonitor(const Participant& owner, IdentityPublicKey trust_root, const ChainView& chain,
                           const Hash256& start_tx, std::map<std::string, const IdentityResponder*> registry)
    : owner_(owner), root_(trust_root), chain_(chain), start_(start_tx), registry_(std::move(registry))
{
    identities_[owner_.tx_key.key_hash()] = owner_.name;
}

std::optional<AddressAttestation> OwnerMonitor::ask(const std::string& who, const Hash256& tx_id)
{
    auto it = registry_.find(who);
    if (it == registry_.end() || !it->second)
        return std::nullopt;
    ++queries_;
    const Bytes wire = encode_frame(to_frame(IdentityQueryMsg{tx_id}));
    auto reply = it->second->answer(decode_frame(wire));
    if (!reply)
        return std::nullopt;
    return identity_reply_from(decode_frame(encode_frame(*reply))).attestation;
}

CollectReport OwnerMonitor::collect(std::uint32_t now)
{
    CollectReport report;
    const ExecutionTrace trace = reconstruct_trace(chain_, start_);
    for (const auto& ev : trace.events) {
        if (ev.kind != EventKind::Handover || seen_.count(ev.tx_id))
            continue;
        seen_.insert(ev.tx_id);
        const auto tx = chain_.find_transaction(ev.tx_id);
        const auto payload = decode_unlocking(tx->inputs.at(0).unlocking);
        const Hash160 sender_kh = parse_redeem_script(payload->redeem_script).payee_key_hash;

        // Ask the sender if we know who it is, otherwise everyone we know.
        std::vector<std::string> candidates;
        if (auto it = identities_.find(sender_kh); it != identities_.end())
            candidates.push_back(it->second);
        else
            for (const auto& [name, _] : registry_)
                candidates.push_back(name);

        std::optional<AddressAttestation> att;
        std::string why = "no participant answered";
        for (const auto& who : candidates) {
            auto a = ask(who, ev.tx_id);
            if (!a)
                continue;
            if (auto err = a->check(root_, now); !err.empty()) {
                why = err;
                continue;
            }
            if (a->process_id != trace.process_id) {
                why = "attestation for another process";
                continue;
            }
            att = a;
            break;
        }
        if (!att) {
            report.gaps.push_back({ev.tx_id, why});
            continue;
        }
        identities_[att->key_hash] = att->certificate.subject;
        report.learned.push_back({ev.tx_id, ev.task_id, att->certificate.subject, att->key_hash});
    }
    return report;
}

} // namespace chorchain
