#include "chorchain/provider.hpp"
#include "chorchain/crypto.hpp"

#include <gtest/gtest.h>

using namespace chorchain;

namespace {

const EcKey& wallet()
{
    static const EcKey k = EcKey::derive(view("provider-wallet"));
    return k;
}

struct World {
    EventLoop loop;
    ChainSim chain{loop, ChainParams{6.0, 1500, 1, 11}};
    Transaction funding;
    Transaction spend;

    World()
    {
        funding.inputs.push_back({OutPoint::null(), 50000, {}, 0});
        funding.outputs.push_back(TxOutput::key_hash(50000, wallet().key_hash()));
        chain.add_funding(funding);
        chain.start();
        spend.inputs.push_back({OutPoint{funding.tx_id(), 0}, 50000, {}, 0xffffffffu});
        spend.outputs.push_back(TxOutput::key_hash(49000, wallet().key_hash()));
        const Bytes pub(wallet().public_key().begin(), wallet().public_key().end());
        spend.inputs[0].unlocking = encode_unlocking({wallet().sign(spend.signing_digest()), pub, {}});
        EXPECT_TRUE(chain.broadcast(spend).ok());
    }
};

void expect_same_answers(DataProvider& p, const World& w)
{
    auto rec = p.get_tx(w.funding.tx_id());
    EXPECT_TRUE(rec.confirmed);
    EXPECT_EQ(rec.height, 0u);
    EXPECT_EQ(rec.tx.serialize(), w.funding.serialize());

    auto pending = p.get_tx(w.spend.tx_id());
    EXPECT_FALSE(pending.confirmed);
    EXPECT_EQ(pending.depth, 0u);

    auto out = p.get_output({w.funding.tx_id(), 0});
    EXPECT_EQ(out.value, 50000u);
    ASSERT_TRUE(out.spent_by.has_value());
    EXPECT_EQ(*out.spent_by, w.spend.tx_id());

    auto addr = p.get_address(wallet().key_hash());
    ASSERT_EQ(addr.outputs.size(), 2u);

    try {
        p.get_tx(Hash256{});
        ADD_FAILURE() << "expected NotFound";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.kind(), ProviderError::Kind::NotFound);
    }
    EXPECT_THROW(p.get_output({w.funding.tx_id(), 7}), ProviderError);
}

} // namespace

TEST(Provider, SimAnswers)
{
    World w;
    SimProvider p(w.chain);
    expect_same_answers(p, w);
}

TEST(Provider, RetryBacksOffThenSucceeds)
{
    World w;
    SimProvider sim(w.chain);
    std::vector<double> sleeps;
    RetryingProvider p(sim, 3, 0.05, [&](double d) { sleeps.push_back(d); });
    sim.fail_next(2);
    EXPECT_NO_THROW(p.get_tx(w.funding.tx_id()));
    EXPECT_EQ(sleeps, (std::vector<double>{0.05, 0.1}));
    EXPECT_NEAR(p.total_backoff(), 0.15, 1e-12);

    sim.fail_next(3);
    EXPECT_THROW(p.get_tx(w.funding.tx_id()), ProviderError);

    // NotFound is final, no retry
    const auto before = sim.calls();
    EXPECT_THROW(p.get_tx(Hash256{}), ProviderError);
    EXPECT_EQ(sim.calls(), before + 1);
}

TEST(Provider, HttpRoundTrip)
{
    World w;
    SimProvider sim(w.chain);
    ProviderServer server(sim);
    const int port = server.start();
    HttpProvider client("127.0.0.1", port);
    expect_same_answers(client, w);

    sim.fail_next(1);
    try {
        client.get_tx(w.funding.tx_id());
        ADD_FAILURE() << "expected Timeout";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.kind(), ProviderError::Kind::Timeout);
    }
    server.stop();
    EXPECT_THROW(client.get_tx(w.funding.tx_id()), ProviderError);
}

TEST(Provider, ChainViewCountsQueries)
{
    World w;
    SimProvider sim(w.chain);
    ProviderChainView view(sim);
    EXPECT_TRUE(view.find_transaction(w.spend.tx_id()).has_value());
    EXPECT_FALSE(view.find_transaction(Hash256{}).has_value());
    EXPECT_EQ(view.spender_of({w.funding.tx_id(), 0}), w.spend.tx_id());
    EXPECT_FALSE(view.spender_of({w.spend.tx_id(), 0}).has_value());
    EXPECT_EQ(view.queries(), 4u);
}

TEST(Provider, JsonRoundTrip)
{
    OutputRecord o{{Hash256{}, 3}, 77, Bytes{0x6a, 0x00}, std::nullopt};
    auto back = output_record_from_json(to_json(o));
    EXPECT_EQ(back.outpoint, o.outpoint);
    EXPECT_EQ(back.script, o.script);
    EXPECT_FALSE(back.spent_by.has_value());
}
