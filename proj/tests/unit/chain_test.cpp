#include "chorchain/chain.hpp"
#include "chorchain/crypto.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace chorchain;

namespace {

const EcKey& wallet()
{
    static const EcKey k = EcKey::derive(view("wallet"));
    return k;
}

Transaction funding(std::uint64_t value, std::uint32_t nonce = 0)
{
    Transaction tx;
    tx.inputs.push_back({OutPoint::null(), value, {}, nonce});
    tx.outputs.push_back(TxOutput::key_hash(value, wallet().key_hash()));
    return tx;
}

/// Spends the given outputs (all locked to the wallet) into `n_out` equal outputs.
Transaction spend(const std::vector<std::pair<const Transaction*, std::uint32_t>>& from, std::size_t n_out,
                  std::uint64_t fee = 1000)
{
    Transaction tx;
    std::uint64_t total = 0;
    for (auto [prev, idx] : from) {
        tx.inputs.push_back({OutPoint{prev->tx_id(), idx}, prev->outputs[idx].value, {}, 0xffffffffu});
        total += prev->outputs[idx].value;
    }
    for (std::size_t i = 0; i < n_out; ++i)
        tx.outputs.push_back(TxOutput::key_hash((total - fee) / n_out, wallet().key_hash()));
    const Bytes pub(wallet().public_key().begin(), wallet().public_key().end());
    const Bytes sig = wallet().sign(tx.signing_digest());
    for (auto& in : tx.inputs)
        in.unlocking = encode_unlocking({sig, pub, {}});
    return tx;
}

struct Sim {
    EventLoop loop;
    ChainSim chain;
    explicit Sim(ChainParams p = {}) : chain(loop, p) {}
};

} // namespace

TEST(EventLoop, OrdersByTimeThenSchedule)
{
    EventLoop loop;
    std::vector<int> seen;
    loop.schedule_at(2.0, [&] { seen.push_back(3); });
    loop.schedule_at(1.0, [&] { seen.push_back(1); });
    loop.schedule_at(1.0, [&] { seen.push_back(2); });
    loop.run_to(5.0);
    EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
    EXPECT_DOUBLE_EQ(loop.now(), 5.0);
    EXPECT_FALSE(loop.run_next());
}

TEST(Chain, BroadcastRules)
{
    Sim s(ChainParams{6.0, 1500, 1, 3});
    Transaction f = funding(100000);
    s.chain.add_funding(f);
    s.chain.start();
    Transaction a = spend({{&f, 0}}, 1);
    EXPECT_TRUE(s.chain.broadcast(a).ok());
    EXPECT_EQ(s.chain.broadcast(a).status, BroadcastStatus::Duplicate);

    Transaction b = spend({{&f, 0}}, 1, 2000);
    EXPECT_EQ(s.chain.broadcast(b).status, BroadcastStatus::Conflict);

    Transaction free_tx = spend({{&a, 0}}, 1, 0);
    EXPECT_EQ(s.chain.broadcast(free_tx).status, BroadcastStatus::FeeTooLow);

    Transaction orphan = spend({{&b, 0}}, 1);
    EXPECT_EQ(s.chain.broadcast(orphan).status, BroadcastStatus::MissingInput);

    Transaction bad = spend({{&a, 0}}, 1);
    bad.outputs[0].value -= 1; // signature no longer covers the outputs
    EXPECT_EQ(s.chain.broadcast(bad).status, BroadcastStatus::ScriptFailure);

    Transaction lying = spend({{&a, 0}}, 1);
    lying.inputs[0].prev_value += 5;
    EXPECT_EQ(s.chain.broadcast(lying).status, BroadcastStatus::ValueMismatch);

    EXPECT_THROW(s.chain.add_funding(funding(5, 1)), std::logic_error);
}

TEST(Chain, ChainedTransactionsConfirmTogether)
{
    Sim s;
    Transaction f = funding(100000);
    s.chain.add_funding(f);
    s.chain.start();
    Transaction a = spend({{&f, 0}}, 1);
    Transaction b = spend({{&a, 0}}, 1);
    Transaction c = spend({{&b, 0}}, 1);
    for (auto* tx : {&a, &b, &c})
        ASSERT_TRUE(s.chain.broadcast(*tx).ok());
    EXPECT_EQ(s.chain.status(c.tx_id()).depth, 0u);
    s.chain.wait_confirmation(c.tx_id(), 1);
    EXPECT_EQ(s.chain.status(a.tx_id()).height, s.chain.status(c.tx_id()).height);
    s.chain.mine_block_now();
    EXPECT_EQ(s.chain.status(a.tx_id()).depth, 2u);
    EXPECT_EQ(s.chain.status(f.tx_id()).depth, s.chain.tip_height() + 1);
}

TEST(Chain, CapacityAndFeePriority)
{
    Sim s(ChainParams{6.0, 2, 1, 1});
    std::vector<Transaction> funds;
    for (std::uint32_t i = 0; i < 4; ++i) {
        funds.push_back(funding(100000, i));
        s.chain.add_funding(funds.back());
    }
    std::vector<Transaction> txs;
    const std::uint64_t fees[] = {1000, 5000, 3000, 4000};
    for (std::size_t i = 0; i < 4; ++i) {
        txs.push_back(spend({{&funds[i], 0}}, 1, fees[i]));
        ASSERT_TRUE(s.chain.broadcast(txs.back()).ok());
    }
    s.chain.mine_block_now();
    auto blocks = s.chain.blocks();
    ASSERT_EQ(blocks.back().txs.size(), 2u);
    EXPECT_EQ(blocks.back().txs[0], txs[1].tx_id());
    EXPECT_EQ(blocks.back().txs[1], txs[3].tx_id());
    EXPECT_EQ(s.chain.mempool().size(), 2u);
}

TEST(Chain, AwaitDepthZeroAndEviction)
{
    Sim s;
    Transaction f = funding(100000);
    s.chain.add_funding(f);
    s.chain.start();
    Transaction a = spend({{&f, 0}}, 2);
    Transaction b = spend({{&a, 0}}, 1);
    Transaction sibling = spend({{&a, 1}}, 1);
    for (auto* tx : {&a, &b, &sibling})
        ASSERT_TRUE(s.chain.broadcast(*tx).ok());
    EXPECT_DOUBLE_EQ(s.chain.wait_confirmation(b.tx_id(), 0), 0.0);

    std::optional<AwaitResult> got;
    s.chain.await_confirmation(b.tx_id(), 1, [&](AwaitResult r) { got = r; });
    Transaction alt = spend({{&a, 0}}, 1, 7000);
    auto evicted = s.chain.mine_conflicting(alt);
    ASSERT_EQ(evicted.size(), 1u);
    EXPECT_EQ(evicted[0], b.tx_id());
    s.loop.run_until([&] { return got.has_value(); });
    ASSERT_TRUE(got.has_value());
    EXPECT_TRUE(got->evicted);
    EXPECT_TRUE(s.chain.status(b.tx_id()).evicted);
    EXPECT_TRUE(s.chain.status(sibling.tx_id()).known);
    EXPECT_THROW(s.chain.wait_confirmation(b.tx_id(), 1), EvictedError);
}

TEST(Chain, Deterministic)
{
    auto run = [](std::uint64_t seed) {
        Sim s(ChainParams{6.0, 1500, 1, seed});
        s.chain.start();
        s.loop.run_to(600.0);
        std::vector<double> times;
        for (const auto& b : s.chain.blocks())
            times.push_back(b.time);
        return times;
    };
    EXPECT_EQ(run(5), run(5));
    EXPECT_NE(run(5), run(6));
    auto t = run(5);
    EXPECT_GT(t.size(), 60u); // about 100 blocks in 600 s
    EXPECT_LT(t.size(), 150u);
}

TEST(Chain, ExponentialMeanWait)
{
    double total = 0;
    const int seeds = 400;
    for (int seed = 0; seed < seeds; ++seed) {
        Sim s(ChainParams{600.0, 1500, 1, static_cast<std::uint64_t>(seed)});
        Transaction f = funding(100000);
        s.chain.add_funding(f);
        s.chain.start();
        Transaction a = spend({{&f, 0}}, 1);
        ASSERT_TRUE(s.chain.broadcast(a).ok());
        total += s.chain.wait_confirmation(a.tx_id(), 1);
    }
    EXPECT_NEAR(total / seeds, 600.0, 90.0);
}

TEST(Publish, GreedyBeatsNonGreedy)
{
    auto run = [](PublishMode mode, std::size_t n, std::uint64_t seed) {
        Sim s(ChainParams{6.0, 1500, 1, seed});
        Transaction f = funding(1'000'000);
        s.chain.add_funding(f);
        std::vector<Transaction> txs;
        txs.reserve(n);
        const Transaction* prev = &f;
        for (std::size_t i = 0; i < n; ++i) {
            txs.push_back(spend({{prev, 0}}, 1));
            prev = &txs.back();
        }
        return publish_sequence(s.chain, s.loop, txs, mode);
    };
    double greedy = 0, serial = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto g = run(PublishMode::Greedy, 5, seed);
        auto n = run(PublishMode::NonGreedy, 5, seed + 1000);
        ASSERT_EQ(g.waits.size(), 5u);
        ASSERT_EQ(n.waits.size(), 5u);
        greedy += g.total;
        serial += n.total;
    }
    EXPECT_GT(serial / greedy, 2.5);
}
