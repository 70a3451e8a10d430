#include "chorchain/script.hpp"
#include "chorchain/trace.hpp"
#include "chorchain/tx_engine.hpp"
#include "engine_fixture.hpp"

#include <gtest/gtest.h>

using namespace chorchain;
using chorchain::testing::EngineFixture;
using chorchain::testing::key;

namespace {

TxEngineError::Code engine_code(const std::function<void()>& f)
{
    try {
        f();
    } catch (const TxEngineError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no TxEngineError thrown";
    return TxEngineError::Code::Range;
}

ExpectedTerms expect_for(const HandoverTemplate& t, const EcKey& receiver, const std::string& data)
{
    ExpectedTerms e;
    e.process_id = t.terms.process_id;
    e.task_id = t.terms.task_id;
    e.timestamp = t.terms.timestamp;
    e.receiver_key_hash = receiver.key_hash();
    e.received_data_hash = sha256(view(data));
    return e;
}

} // namespace

TEST(Budget, StartShortfall)
{
    EngineFixture f;
    auto funds = f.fund(100000);
    try {
        f.engine.build_start({funds}, 1, 0, 6, f.owner);
        FAIL();
    } catch (const TxEngineError& e) {
        EXPECT_EQ(e.code(), TxEngineError::Code::InsufficientFunds);
        EXPECT_EQ(e.shortfall(), 132874u - 100000u);
    }
}

TEST(Budget, ExactFundsLeaveNoChange)
{
    EngineFixture f;
    auto funds = f.fund(132874);
    auto r = f.engine.build_start({funds}, 1, 0, 6, f.owner);
    EXPECT_EQ(r.token.value, 132874u - kDefaultFee);
    EXPECT_EQ(r.tx.outputs.size(), 2u);
    EXPECT_EQ(r.tx.fee(), static_cast<std::int64_t>(kDefaultFee));
    EXPECT_EQ(classify_transaction(r.tx), TxKind::Start);
    EXPECT_TRUE(verify_input(r.tx, 0, TxOutput::key_hash(132874, f.owner.key_hash())).ok);
}

TEST(Budget, LargestFirstWithChange)
{
    EngineFixture f;
    auto small = f.fund(50000);
    auto big = f.fund(120000);
    auto mid = f.fund(90000);
    auto r = f.engine.build_start({small, big, mid}, 1, 0, 6, f.owner);
    ASSERT_EQ(r.tx.inputs.size(), 2u);
    EXPECT_EQ(r.tx.inputs[0].prevout, big.outpoint);
    EXPECT_EQ(r.tx.inputs[1].prevout, mid.outpoint);
    ASSERT_EQ(r.tx.outputs.size(), 3u);
    EXPECT_EQ(r.tx.outputs[2].value, 210000u - 132874u);
    EXPECT_EQ(r.tx.outputs[2].as_key_hash(), f.owner.key_hash());
}

TEST(Budget, SafetyFactorAndRange)
{
    FeePolicy p{1000, 3, 2};
    EXPECT_EQ(p.budget(5), 7500u);
    EXPECT_EQ((FeePolicy{1000, 4, 3}).budget(1), 1334u);
    EngineFixture f;
    auto funds = f.fund(1'000'000);
    EXPECT_EQ(engine_code([&] { f.engine.build_start({funds}, 65536, 0, 2, f.owner); }), TxEngineError::Code::Range);
}

TEST(Budget, EstimateFromModel)
{
    EXPECT_EQ(estimate_tx_count(evaluation_model(1)), 5u);
    EXPECT_EQ(estimate_tx_count(evaluation_model(2)), 5u);
    EXPECT_EQ(estimate_tx_count(evaluation_model(3)), 9u);
    EXPECT_EQ(estimate_tx_count(evaluation_model(4)), 9u);
}

TEST(Template, OutputLocksReceiverAndData)
{
    EngineFixture f;
    auto token = f.start(7, 5);
    EcKey bob = key("bob");
    const Hash256 h = sha256(view("payload"));
    auto t = f.engine.build_handover_template(token, 1, 100, bob.key_hash(), h);
    EXPECT_EQ(t.tx.outputs[0].as_script_hash(), (RedeemScript{bob.key_hash(), h}).script_hash());
    EXPECT_EQ(t.tx.outputs[0].value, token.value - kDefaultFee);
    auto block = *t.tx.data_block();
    EXPECT_EQ(block.task_id, 1);
    EXPECT_TRUE(block.signature_is_placeholder());
    EXPECT_EQ(block.receiver_signature.size(), 72u);

    auto plain = f.engine.build_handover_template(token, 1, 100, bob.key_hash(), std::nullopt);
    EXPECT_EQ(plain.tx.outputs[0].as_script_hash(), (RedeemScript{bob.key_hash(), std::nullopt}).script_hash());
}

TEST(Template, Errors)
{
    EngineFixture f;
    auto token = f.start(7, 5);
    EcKey bob = key("bob");
    EXPECT_EQ(engine_code([&] { f.engine.build_handover_template(token, 0, 1, bob.key_hash(), std::nullopt); }),
              TxEngineError::Code::InvalidTaskId);
    EXPECT_EQ(engine_code([&] { f.engine.build_handover_template(token, 0xFC, 1, bob.key_hash(), std::nullopt); }),
              TxEngineError::Code::InvalidTaskId);
    ProcessToken poor = token;
    poor.value = kDefaultFee;
    EXPECT_EQ(engine_code([&] { f.engine.build_handover_template(poor, 1, 1, bob.key_hash(), std::nullopt); }),
              TxEngineError::Code::TokenTooSmall);
}

TEST(Handover, FaultFreeRoundTrip)
{
    EngineFixture f;
    auto token = f.start(7, 5);
    EcKey bob = key("bob");
    auto t = f.engine.build_handover_template(token, 1, f.clock, bob.key_hash(), sha256(view("d1")));
    EXPECT_TRUE(accepted(validate_template(t, expect_for(t, bob, "d1"), evaluation_model(1), f.chain)));

    Bytes sig = f.engine.sign_as_receiver(t, bob);
    EXPECT_EQ(sig.size(), 71u);
    EXPECT_TRUE(verify_signature(view(bob.public_key()), t.tx.signing_digest(), sig));
    Transaction tx = f.engine.finalize_and_sign_as_sender(t, sig, bob.public_key(), token.holder_key);
    EXPECT_EQ(tx.serialize().size(), Transaction::deserialize(tx.serialize()).serialize().size());
    EXPECT_EQ(tx.data_block()->receiver_signature, sig);
    EXPECT_EQ(encode_data_block(*tx.data_block()).size(), 79u);
    EXPECT_TRUE(verify_input(tx, 0, token_output(token)).ok);
    EXPECT_EQ(tx.signing_digest(), t.tx.signing_digest());
}

TEST(Handover, ReceiverRejections)
{
    EngineFixture f;
    auto token = f.start(7, 5);
    EcKey bob = key("bob");
    const auto& m = evaluation_model(1);

    auto wrong_task = f.engine.build_handover_template(token, 3, f.clock, bob.key_hash(), sha256(view("d1")));
    auto e = expect_for(wrong_task, bob, "d1");
    e.task_id = 1;
    auto v = validate_template(wrong_task, e, m, f.chain);
    ASSERT_FALSE(accepted(v));
    EXPECT_EQ(std::get<Reject>(v).check, 3);

    auto t = f.engine.build_handover_template(token, 1, f.clock, bob.key_hash(), sha256(view("d1")));
    auto wrong_data = expect_for(t, bob, "d1");
    wrong_data.received_data_hash = sha256(view("e1"));
    v = validate_template(t, wrong_data, m, f.chain);
    ASSERT_FALSE(accepted(v));
    EXPECT_EQ(std::get<Reject>(v).check, 2);

    auto prev = expect_for(t, bob, "d1");
    prev.previous_data_hash = sha256(view("never sent"));
    v = validate_template(t, prev, m, f.chain);
    ASSERT_FALSE(accepted(v));
    EXPECT_EQ(std::get<Reject>(v).check, 1);

    auto late = expect_for(t, bob, "d1");
    late.timestamp += 121;
    EXPECT_EQ(std::get<Reject>(validate_template(t, late, m, f.chain)).check, 3);
    late.timestamp -= 1;
    EXPECT_TRUE(accepted(validate_template(t, late, m, f.chain)));

    // Negotiated and written consistently, but t2 is not allowed yet.
    auto skip = f.engine.build_handover_template(token, 2, f.clock, bob.key_hash(), sha256(view("d1")));
    v = validate_template(skip, expect_for(skip, bob, "d1"), m, f.chain);
    ASSERT_FALSE(accepted(v));
    EXPECT_EQ(std::get<Reject>(v).check, 4);

    MemoryChainView empty;
    EXPECT_THROW(validate_template(t, expect_for(t, bob, "d1"), m, empty), UnresolvableAncestor);
}

TEST(Handover, SignatureErrors)
{
    EngineFixture f;
    auto token = f.start(7, 5);
    EcKey bob = key("bob");
    EcKey eve = key("eve");
    auto t = f.engine.build_handover_template(token, 1, f.clock, bob.key_hash(), std::nullopt);
    EXPECT_EQ(engine_code([&] { f.engine.sign_as_receiver(t, eve); }), TxEngineError::Code::KeyMismatch);

    Bytes sig = f.engine.sign_as_receiver(t, bob);
    Bytes corrupt = sig;
    corrupt[10] ^= 1;
    EXPECT_EQ(engine_code([&] { f.engine.finalize_and_sign_as_sender(t, corrupt, bob.public_key(), token.holder_key); }),
              TxEngineError::Code::BadReceiverSignature);
    EXPECT_EQ(engine_code([&] { f.engine.finalize_and_sign_as_sender(t, sig, bob.public_key(), eve); }),
              TxEngineError::Code::UnlockFailure);
}

TEST(SplitJoin, Conservation)
{
    EngineFixture f;
    auto token = f.start(9, 9);
    auto split = f.engine.build_split(token, 3, f.clock);
    ASSERT_EQ(split.tokens.size(), 3u);
    const std::uint64_t rest = token.value - kDefaultFee;
    EXPECT_EQ(split.tokens[0].value, rest / 3 + rest % 3);
    EXPECT_EQ(split.tokens[1].value, rest / 3);
    EXPECT_EQ(split.tx.output_value(), token.value - kDefaultFee);
    EXPECT_EQ(classify_transaction(split.tx), TxKind::Split);
    EXPECT_TRUE(verify_input(split.tx, 0, token_output(token)).ok);
    f.chain.add(split.tx);

    auto join = f.engine.build_join({split.tokens[0], split.tokens[1], split.tokens[2]}, f.clock, f.owner);
    EXPECT_EQ(join.token.value, token.value - 2 * kDefaultFee);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_TRUE(verify_input(join.tx, i, split.tx.outputs[i]).ok);
    EXPECT_EQ(classify_transaction(join.tx), TxKind::Join);

    EXPECT_EQ(engine_code([&] { f.engine.build_split(token, 1, 0); }), TxEngineError::Code::TooFewBranches);
    EXPECT_EQ(engine_code([&] { f.engine.build_join({split.tokens[0]}, 0, f.owner); }),
              TxEngineError::Code::TooFewTokens);
    ProcessToken foreign = split.tokens[1];
    foreign.process_id = 10;
    EXPECT_EQ(engine_code([&] { f.engine.build_join({split.tokens[0], foreign}, 0, f.owner); }),
              TxEngineError::Code::MixedProcesses);
    // The original token is spent by the split now.
    EXPECT_EQ(engine_code([&] { f.engine.build_split(token, 2, 0); }), TxEngineError::Code::TokenSpent);
}

TEST(End, OwnerOnlyUnlessExtraordinary)
{
    EngineFixture f;
    auto token = f.start(3, 5);
    EcKey bob = key("bob");
    auto held = f.handover(token, 1, bob, "x");
    EXPECT_EQ(engine_code([&] { f.engine.build_end(held, f.clock, f.owner.key_hash()); }),
              TxEngineError::Code::NotOwner);

    Transaction abort = f.engine.build_end(held, f.clock, f.owner.key_hash(), true);
    EXPECT_EQ(abort.data_block()->kind, BlockKind::ExtraordinaryEnd);
    EXPECT_EQ(abort.data_block()->marker(), 0xFF);
    EXPECT_TRUE(verify_input(abort, 0, token_output(held)).ok);

    auto back = f.handover(held, kFillerTaskId, f.owner, "y");
    Transaction end = f.engine.build_end(back, f.clock, f.owner.key_hash());
    EXPECT_EQ(classify_transaction(end), TxKind::End);
    EXPECT_EQ(end.outputs[0].value, back.value - kDefaultFee);
    f.chain.add(end);
    EXPECT_EQ(engine_code([&] { f.engine.build_end(back, f.clock, f.owner.key_hash()); }),
              TxEngineError::Code::TokenSpent);

    ProcessToken exact = back;
    exact.value = kDefaultFee;
    exact.holding_output.index = 7;
    Transaction zero = f.engine.build_end(exact, 0, f.owner.key_hash());
    EXPECT_EQ(zero.outputs.size(), 1u);
    EXPECT_TRUE(zero.outputs[0].is_data());
}
