#pragma once

#include "chorchain/chain_view.hpp"
#include "chorchain/rng.hpp"
#include "chorchain/wire.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

namespace chorchain {

/// Discrete-event loop over simulated seconds. Events at equal times run in
/// scheduling order.
class EventLoop {
public:
    using Callback = std::function<void()>;

    double now() const { return now_; }
    void schedule_at(double time, Callback cb);
    void schedule_after(double delay, Callback cb) { schedule_at(now_ + delay, std::move(cb)); }

    /// Runs the earliest event; false when none is left.
    bool run_next();
    /// Runs events until `done()` holds or the queue drains; returns done().
    bool run_until(const std::function<bool()>& done);
    /// Runs every event scheduled at or before `time`, then sets the clock to it.
    void run_to(double time);
    std::size_t pending() const { return queue_.size(); }

private:
    struct Event {
        double time;
        std::uint64_t seq;
        Callback cb;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const
        {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    double now_ = 0.0;
    std::uint64_t seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
};

struct ChainParams {
    double block_mean = 6.0; // seconds
    std::size_t block_capacity = 1500;
    std::uint64_t min_relay_fee = 1;
    std::uint64_t seed = 1;
};

struct ChainBlock {
    std::uint64_t height = 0;
    double time = 0.0;
    std::vector<Hash256> txs;
};

enum class BroadcastStatus { Accepted, Duplicate, MissingInput, Conflict, ScriptFailure, ValueMismatch, FeeTooLow, Invalid };

std::string_view to_string(BroadcastStatus status);

struct BroadcastResult {
    BroadcastStatus status = BroadcastStatus::Accepted;
    std::string reason;

    bool ok() const { return status == BroadcastStatus::Accepted; }
};

struct ConfirmationStatus {
    bool known = false;
    bool evicted = false;
    std::uint32_t depth = 0; // 0 while pending
    std::optional<std::uint64_t> height;
};

struct AwaitResult {
    bool evicted = false;
    double waited = 0.0; // simulated seconds between registration and resolution
};

class EvictedError : public std::runtime_error {
public:
    explicit EvictedError(const Hash256& tx_id)
        : std::runtime_error("transaction " + to_hex(tx_id) + " was evicted"), tx_id_(tx_id)
    {
    }
    const Hash256& tx_id() const { return tx_id_; }

private:
    Hash256 tx_id_;
};

/// In-memory blockchain: mempool, blocks with exponential intervals, first-seen
/// conflict rule and descendant eviction. Public methods are serialised by an
/// internal mutex.
class ChainSim : public ChainView {
public:
    ChainSim(EventLoop& loop, ChainParams params);

    const ChainParams& params() const { return params_; }

    /// Confirms a coinbase-style funding transaction in the genesis block.
    /// Only valid before start().
    void add_funding(const Transaction& tx);
    /// Schedules block production.
    void start();
    bool started() const { return started_; }

    BroadcastResult broadcast(const Transaction& tx);

    /// A competing spend that reaches a miner first: `alt` is mined in a new
    /// block right away and every mempool transaction it conflicts with is
    /// evicted together with its descendants. Returns the evicted ids.
    std::vector<Hash256> mine_conflicting(const Transaction& alt);

    /// Mines one block immediately (outside the random schedule).
    void mine_block_now();

    ConfirmationStatus status(const Hash256& tx_id) const;
    std::uint64_t tip_height() const;

    /// Callback once `tx_id` reaches `depth` or is evicted. Depth 0 resolves
    /// on the next loop step for a known transaction.
    void await_confirmation(const Hash256& tx_id, std::uint32_t depth, std::function<void(AwaitResult)> done);
    /// Drives the loop until the await resolves. Throws EvictedError.
    double wait_confirmation(const Hash256& tx_id, std::uint32_t depth);

    std::optional<Transaction> find_transaction(const Hash256& tx_id) const override;
    std::optional<Hash256> spender_of(const OutPoint& outpoint) const override;

    std::vector<ChainBlock> blocks() const;
    std::vector<Hash256> mempool() const;
    std::vector<double> block_intervals() const;
    /// Outputs (by outpoint) whose locking script carries `hash` as key or script hash.
    std::vector<OutPoint> outputs_for(const Hash160& hash) const;

    std::size_t evicted_count() const;

private:
    struct Entry {
        Transaction tx;
        std::uint64_t arrival = 0;
        std::optional<std::uint64_t> height;
    };
    struct Waiter {
        Hash256 tx_id;
        std::uint32_t depth;
        double since;
        std::function<void(AwaitResult)> done;
    };

    void schedule_next_block();
    void produce_block();
    void include(ChainBlock& block, const Hash256& id);
    std::vector<Hash256> evict_closure(const std::vector<Hash256>& roots);
    void resolve_waiters();
    std::uint32_t depth_locked(const Hash256& id) const;

    EventLoop& loop_;
    ChainParams params_;
    Rng interval_rng_;
    bool started_ = false;

    mutable std::recursive_mutex mu_;
    std::map<Hash256, Entry> txs_; // chain + mempool
    std::set<Hash256> evicted_;
    std::map<OutPoint, Hash256> spent_by_;
    std::vector<ChainBlock> blocks_;
    std::vector<double> intervals_;
    std::uint64_t arrivals_ = 0;
    double last_block_time_ = 0.0;
    std::vector<Waiter> waiters_;
};

enum class PublishMode { NonGreedy, Greedy };

struct PublishResult {
    std::vector<double> waits; // per transaction, broadcast to depth 1
    double total = 0.0;
};

/// NonGreedy broadcasts each transaction after its predecessor confirmed;
/// Greedy broadcasts all at once and waits for the last confirmation.
/// Throws std::runtime_error on a rejected broadcast and EvictedError.
PublishResult publish_sequence(ChainSim& chain, EventLoop& loop, const std::vector<Transaction>& txs, PublishMode mode);

} // namespace chorchain
