#include "chorchain/handover.hpp"
#include "chorchain/provider.hpp"

#include <gtest/gtest.h>

using namespace chorchain;

namespace {

constexpr std::uint32_t kEpoch = 1'600'000'000;

Hash256 seed_of(const std::string& s) { return sha256(view(s)); }

struct World {
    EventLoop loop;
    ChainSim chain{loop, ChainParams{6.0, 1500, 1, 21}};
    SimProvider provider{chain};
    ProviderChainView chain_view{provider};
    Transport transport{loop, 0.002};
    ProtocolCosts costs;
    PhaseTimes phases;
    TrustRoot root{seed_of("root")};
    Participant owner = root.enroll("owner", kEpoch - 1000, kEpoch + 1'000'000);
    TxEngine engine{FeePolicy{}, &chain};
    const ProcessModel& model = evaluation_model(1);
    std::map<std::string, Participant> people;
    std::map<std::string, IdentityResponder> responders;
    std::map<std::string, ReplayGuard> guards;
    int step = 0;

    World()
    {
        Transaction funding;
        funding.inputs.push_back({OutPoint::null(), 1'000'000, {}, 0});
        funding.outputs.push_back(TxOutput::key_hash(1'000'000, owner.tx_key.key_hash()));
        chain.add_funding(funding);
        chain.start();
        auto start = engine.build_start({Spendable{{funding.tx_id(), 0}, 1'000'000, owner.tx_key}}, 9, kEpoch,
                                        estimate_tx_count(model), owner.tx_key);
        EXPECT_TRUE(chain.broadcast(start.tx).ok());
        start_id = start.tx.tx_id();
        token = start.token;
        holder = "owner";
        responders["owner"];
    }

    const Participant& person(const std::string& name)
    {
        auto it = people.find(name);
        if (it == people.end())
            it = people.emplace(name, root.enroll(name, kEpoch - 1000, kEpoch + 1'000'000)).first;
        return it->second;
    }

    const Participant& who(const std::string& name) { return name == "owner" ? owner : person(name); }

    struct Pair {
        std::shared_ptr<SenderSession> sender;
        std::shared_ptr<ReceiverSession> receiver;
    };

    Pair make(const std::string& to, TaskId task, Bytes data = Bytes{1, 2, 3})
    {
        ++step;
        SenderSetup s(token);
        s.self = &who(holder);
        s.trust_root = root.public_key();
        s.replay = &guards[holder];
        s.terms = {9, task, kEpoch + 3600, {}};
        s.process_data = std::move(data);
        s.owner_key_hash = owner.tx_key.key_hash();
        s.engine = &engine;
        s.broadcast = [this](const Transaction& tx) { return chain.broadcast(tx); };
        s.epoch = kEpoch;
        s.entropy = seed_of(holder + "/" + std::to_string(step));

        ReceiverSetup r;
        r.self = &who(to);
        r.trust_root = root.public_key();
        r.replay = &guards[to];
        r.model = &model;
        r.chain = &chain_view;
        r.epoch = kEpoch;
        r.entropy = seed_of(to + "/" + std::to_string(step));
        return {std::make_shared<SenderSession>(std::move(s)), std::make_shared<ReceiverSession>(std::move(r))};
    }

    void run(const Pair& p) { run_handover_blocking(loop, transport, costs, p.sender, p.receiver, phases); }

    /// Full handover; moves the token on success.
    Pair hand(const std::string& to, TaskId task)
    {
        auto p = make(to, task);
        run(p);
        if (p.sender->state() == SessionState::Published) {
            const auto& tx = *p.sender->published();
            responders[holder].record(tx.tx_id(), *p.sender->peer_attestation());
            token = ProcessToken{9, {tx.tx_id(), 0}, tx.outputs[0].value, who(to).tx_key, p.sender->data_hash()};
            holder = to;
        }
        return p;
    }

    Hash256 start_id{};
    ProcessToken token{0, {}, 0, EcKey::derive(view("unused")), std::nullopt};
    std::string holder;
};

} // namespace

TEST(Frames, RoundTripAndErrors)
{
    Frame f{FrameType::Ack, Bytes{1, 2, 3}};
    Bytes wire = encode_frame(f);
    EXPECT_EQ(to_hex(wire), "0000000406010203");
    auto back = decode_frame(wire);
    EXPECT_EQ(back.type, FrameType::Ack);
    EXPECT_EQ(back.payload, f.payload);

    wire.pop_back();
    EXPECT_THROW(decode_frame(wire), ProtocolError);
    EXPECT_THROW(decode_frame(from_hex("0000000109")), ProtocolError);
    EXPECT_THROW(decode_frame(from_hex("000000")), ProtocolError);

    AckMsg ack{AckCode::Rejected, 3, {}, "task id 7 instead of negotiated 2"};
    auto again = ack_from(decode_frame(encode_frame(to_frame(ack))));
    EXPECT_EQ(again.check, 3);
    EXPECT_EQ(again.reason, ack.reason);
    EXPECT_THROW(negotiate_from(to_frame(ack)), ProtocolError);
}

TEST(Pki, CertificatesAndAttestations)
{
    TrustRoot root(seed_of("root"));
    TrustRoot other(seed_of("other"));
    Participant alice = root.enroll("alice", 100, 200);
    EXPECT_EQ(check_certificate(alice.certificate, root.public_key(), 150), "");
    EXPECT_NE(check_certificate(alice.certificate, root.public_key(), 201), "");
    EXPECT_NE(check_certificate(alice.certificate, root.public_key(), 99), "");
    EXPECT_NE(check_certificate(alice.certificate, other.public_key(), 150), "");

    auto att = AddressAttestation::make(alice, 4, AttestationNonce{});
    EXPECT_EQ(att.check(root.public_key(), 150), "");
    auto forged = att;
    forged.key_hash[0] ^= 1;
    EXPECT_NE(forged.check(root.public_key(), 150), "");

    auto decoded = attestation_from(to_frame(att));
    EXPECT_EQ(decoded.signature, att.signature);
    EXPECT_EQ(decoded.certificate.subject, "alice");

    ReplayGuard guard;
    EXPECT_TRUE(guard.fresh(att.nonce));
    EXPECT_FALSE(guard.fresh(att.nonce));
}

TEST(Aead, KeyGatesDecryption)
{
    SymmetricKey key{};
    key[0] = 7;
    AeadNonce nonce{};
    Bytes sealed = aead_seal(key, nonce, Bytes{}, Bytes{});
    EXPECT_EQ(sealed.size(), kAeadTagSize);
    EXPECT_EQ(aead_open(key, nonce, sealed, Bytes{}), Bytes{});
    SymmetricKey wrong{};
    EXPECT_FALSE(aead_open(wrong, nonce, sealed, Bytes{}).has_value());
}

TEST(Handover, FaultFreePublishes)
{
    World w;
    Bytes big(1 << 20, 0x5a);
    auto p = w.make("alice", 1, big);
    w.run(p);
    ASSERT_EQ(p.sender->state(), SessionState::Published) << p.sender->abort_detail();
    EXPECT_EQ(p.receiver->state(), SessionState::ReceiverSigned) << p.receiver->abort_detail();
    EXPECT_EQ(p.receiver->process_data(), big);
    EXPECT_EQ(p.sender->data_hash(), sha256(big));

    const Transaction& tx = *p.sender->published();
    EXPECT_TRUE(w.chain.status(tx.tx_id()).known);
    EXPECT_EQ(p.receiver->published_id(), tx.tx_id());
    EXPECT_EQ(encode_data_block(*tx.data_block()).size(), 79u);

    ASSERT_TRUE(p.receiver->proof().has_value());
    EXPECT_EQ(p.sender->peer_attestation()->key_hash, w.person("alice").tx_key.key_hash());
    EXPECT_EQ(p.receiver->peer_attestation()->certificate.subject, "owner");
    EXPECT_GT(w.phases.logic, 0.0);
    EXPECT_GT(w.phases.provider, 0.0);
    EXPECT_DOUBLE_EQ(w.phases.broadcast, w.costs.broadcast);
}

TEST(Handover, WrongTaskIsRejectedAtCheckThree)
{
    World w;
    auto p = w.make("alice", 1);
    TxEngine engine;
    const ProcessToken token = w.token;
    SenderSetup s = p.sender->setup();
    s.tamper = [&engine, token](HandoverTemplate& t) {
        t = engine.build_handover_template(token, 2, t.terms.timestamp, t.terms.receiver_key_hash, t.terms.data_hash);
    };
    p.sender = std::make_shared<SenderSession>(std::move(s));
    w.run(p);
    EXPECT_EQ(p.receiver->state(), SessionState::Aborted);
    EXPECT_EQ(p.receiver->abort_reason(), AbortReason::Validation);
    EXPECT_EQ(p.receiver->rejected_check(), 3);
    EXPECT_FALSE(p.receiver->process_data().has_value());
    EXPECT_EQ(p.sender->abort_reason(), AbortReason::Validation);
    EXPECT_EQ(p.sender->rejected_check(), 3);
    ASSERT_TRUE(p.sender->end_tx().has_value());
    EXPECT_EQ(p.sender->end_tx()->data_block()->marker(), marker::ExtraordinaryEnd);
    EXPECT_TRUE(w.chain.status(p.sender->end_tx()->tx_id()).known);
}

TEST(Handover, DataHashMismatchIsCheckTwo)
{
    World w;
    auto p = w.make("alice", 1);
    TxEngine engine;
    const ProcessToken token = w.token;
    SenderSetup s = p.sender->setup();
    s.tamper = [&engine, token](HandoverTemplate& t) {
        t = engine.build_handover_template(token, t.terms.task_id, t.terms.timestamp, t.terms.receiver_key_hash,
                                           sha256(view(std::string("something else"))));
    };
    p.sender = std::make_shared<SenderSession>(std::move(s));
    w.run(p);
    EXPECT_EQ(p.receiver->rejected_check(), 2);
    EXPECT_EQ(p.sender->abort_reason(), AbortReason::Validation);
}

TEST(Handover, NegotiationAndIdentityFailures)
{
    {
        World w;
        auto p = w.make("alice", 1);
        ReceiverSetup r{&w.person("alice"), w.root.public_key(), nullptr, &w.model, &w.chain_view, kEpoch, {},
                        [](const NegotiationTerms& t) { return t.task_id != 1; }};
        p.receiver = std::make_shared<ReceiverSession>(std::move(r));
        w.run(p);
        EXPECT_EQ(p.sender->abort_reason(), AbortReason::Negotiation);
        EXPECT_EQ(p.receiver->abort_reason(), AbortReason::Negotiation);
    }
    {
        World w;
        Participant stale = w.root.enroll("stale", kEpoch - 1000, kEpoch - 10);
        auto p = w.make("alice", 1);
        ReceiverSetup r{&stale, w.root.public_key(), nullptr, &w.model, &w.chain_view, kEpoch, {}, {}};
        p.receiver = std::make_shared<ReceiverSession>(std::move(r));
        w.run(p);
        EXPECT_EQ(p.sender->state(), SessionState::Aborted);
        EXPECT_EQ(p.sender->abort_reason(), AbortReason::Identity);
    }
}

TEST(Handover, ForgedAndReplayedAttestations)
{
    {
        World w;
        auto p = w.make("alice", 1);
        Participant mallory = w.root.enroll("mallory", kEpoch - 1000, kEpoch + 1000);
        // Swap in an attestation signed by someone other than the negotiated peer.
        bool swapped = false;
        w.transport.set_drop_hook([&](int from, int to, const Frame& f) {
            if (swapped || f.type != FrameType::AddrAttest || attestation_from(f).certificate.subject != "alice")
                return false;
            swapped = true;
            w.transport.send(from, to, to_frame(AddressAttestation::make(mallory, 9, attestation_from(f).nonce)));
            return true;
        });
        w.run(p);
        EXPECT_EQ(p.sender->abort_reason(), AbortReason::Attestation);
    }
    {
        World w;
        ASSERT_EQ(w.hand("alice", 1).sender->state(), SessionState::Published);
        auto p = w.make("bob", 2);
        // bob has already seen the nonce alice is about to send
        const Hash256 nonce_src =
            hmac_sha256(view(p.sender->setup().entropy), view(std::string_view("attest-nonce")));
        AttestationNonce nonce{};
        std::copy_n(nonce_src.begin(), nonce.size(), nonce.begin());
        w.guards["bob"].fresh(nonce);
        w.run(p);
        EXPECT_EQ(p.receiver->abort_reason(), AbortReason::Replay);
    }
}

TEST(Handover, DroppedBroadcastLeavesProof)
{
    World w;
    auto p = w.make("alice", 1);
    SenderSetup s = p.sender->setup();
    s.broadcast = [](const Transaction&) { return BroadcastResult{BroadcastStatus::Invalid, "dropped"}; };
    p.sender = std::make_shared<SenderSession>(std::move(s));
    w.run(p);
    EXPECT_EQ(p.sender->abort_reason(), AbortReason::Broadcast);
    EXPECT_EQ(p.receiver->state(), SessionState::ReceiverSigned);
    ASSERT_TRUE(p.receiver->proof().has_value());
    const auto& proof = *p.receiver->proof();
    EXPECT_EQ(proof.sender_certificate.subject, "owner");
    EXPECT_TRUE(verify_signature(view(w.person("alice").tx_key.public_key()), proof.tmpl.tx.signing_digest(),
                                 proof.receiver_signature));
}

TEST(Handover, SilentPeerTimesOut)
{
    World w;
    auto p = w.make("alice", 1);
    w.transport.set_drop_hook([](int, int, const Frame& f) { return f.type == FrameType::ReceiverSig; });
    const double t0 = w.loop.now();
    w.run(p);
    EXPECT_EQ(p.sender->abort_reason(), AbortReason::Timeout);
    EXPECT_GE(w.loop.now() - t0, w.costs.timeout);
    EXPECT_FALSE(w.chain.spender_of(w.token.holding_output).has_value());
}

TEST(Owner, CollectsIdentitiesPullBased)
{
    World w;
    OwnerMonitor monitor(w.owner, w.root.public_key(), w.chain_view, w.start_id, {});
    EXPECT_TRUE(monitor.collect(kEpoch).learned.empty());
    std::map<std::string, const IdentityResponder*> registry;

    ASSERT_EQ(w.hand("alice", 1).sender->state(), SessionState::Published);
    ASSERT_EQ(w.hand("bob", 2).sender->state(), SessionState::Published);
    ASSERT_EQ(w.hand("carol", 3).sender->state(), SessionState::Published);
    for (auto& [name, r] : w.responders)
        registry[name] = &r;

    OwnerMonitor owner(w.owner, w.root.public_key(), w.chain_view, w.start_id, registry);
    auto report = owner.collect(kEpoch);
    ASSERT_EQ(report.learned.size(), 3u);
    EXPECT_EQ(report.learned[0].subject, "alice");
    EXPECT_EQ(report.learned[1].subject, "bob");
    EXPECT_EQ(report.learned[2].subject, "carol");
    EXPECT_TRUE(report.gaps.empty());
    auto again = owner.collect(kEpoch);
    EXPECT_TRUE(again.learned.empty());
    EXPECT_TRUE(again.gaps.empty());
}

TEST(Owner, OfflineParticipantLeavesGap)
{
    World w;
    ASSERT_EQ(w.hand("alice", 1).sender->state(), SessionState::Published);
    ASSERT_EQ(w.hand("bob", 2).sender->state(), SessionState::Published);
    ASSERT_EQ(w.hand("carol", 3).sender->state(), SessionState::Published);
    ASSERT_EQ(w.hand("owner", kFillerTaskId).sender->state(), SessionState::Published);
    w.responders["bob"].set_online(false);
    std::map<std::string, const IdentityResponder*> registry;
    for (auto& [name, r] : w.responders)
        registry[name] = &r;
    OwnerMonitor owner(w.owner, w.root.public_key(), w.chain_view, w.start_id, registry);
    auto report = owner.collect(kEpoch);
    ASSERT_EQ(report.gaps.size(), 1u);
    ASSERT_EQ(report.learned.size(), 3u);
    EXPECT_EQ(report.learned[0].subject, "alice");
    EXPECT_EQ(report.learned[1].subject, "bob");
    EXPECT_EQ(report.learned[2].subject, "owner");
}
