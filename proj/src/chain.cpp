#include "chorchain/chain.hpp"

#include "chorchain/script.hpp"

#include <algorithm>
#include <stdexcept>

namespace chorchain {

// Event loop ----------------------------------------------------------------

void EventLoop::schedule_at(double time, Callback cb)
{
    queue_.push({std::max(time, now_), seq_++, std::move(cb)});
}

bool EventLoop::run_next()
{
    if (queue_.empty())
        return false;
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    ev.cb();
    return true;
}

bool EventLoop::run_until(const std::function<bool()>& done)
{
    while (!done())
        if (!run_next())
            break;
    return done();
}

void EventLoop::run_to(double time)
{
    while (!queue_.empty() && queue_.top().time <= time)
        run_next();
    now_ = std::max(now_, time);
}

// Chain ---------------------------------------------------------------------

std::string_view to_string(BroadcastStatus status)
{
    switch (status) {
    case BroadcastStatus::Accepted: return "accepted";
    case BroadcastStatus::Duplicate: return "duplicate";
    case BroadcastStatus::MissingInput: return "missing-input";
    case BroadcastStatus::Conflict: return "conflict";
    case BroadcastStatus::ScriptFailure: return "script-failure";
    case BroadcastStatus::ValueMismatch: return "value-mismatch";
    case BroadcastStatus::FeeTooLow: return "fee-too-low";
    case BroadcastStatus::Invalid: return "invalid";
    }
    return "?";
}

ChainSim::ChainSim(EventLoop& loop, ChainParams params)
    : loop_(loop), params_(params), interval_rng_(derive_seed(params.seed, 0x626c6f636bULL))
{
    blocks_.push_back({0, loop_.now(), {}});
    last_block_time_ = loop_.now();
}

void ChainSim::add_funding(const Transaction& tx)
{
    std::lock_guard lock(mu_);
    if (started_)
        throw std::logic_error("funding must be added before the chain starts");
    if (!tx.is_funding())
        throw std::invalid_argument("funding transaction needs a single null-prevout input");
    const Hash256 id = tx.tx_id();
    txs_[id] = Entry{tx, arrivals_++, 0};
    blocks_[0].txs.push_back(id);
}

void ChainSim::start()
{
    std::lock_guard lock(mu_);
    if (started_)
        return;
    started_ = true;
    schedule_next_block();
}

void ChainSim::schedule_next_block()
{
    const double interval = interval_rng_.exponential(params_.block_mean);
    intervals_.push_back(interval);
    loop_.schedule_after(interval, [this] {
        produce_block();
        schedule_next_block();
    });
}

BroadcastResult ChainSim::broadcast(const Transaction& tx)
{
    std::unique_lock lock(mu_);
    const Hash256 id = tx.tx_id();
    if (txs_.count(id))
        return {BroadcastStatus::Duplicate, "already known"};
    try {
        check_invariants(tx);
    } catch (const WireError& e) {
        return {BroadcastStatus::Invalid, e.what()};
    }
    if (tx.inputs.empty() || tx.is_funding())
        return {BroadcastStatus::Invalid, "no spendable inputs"};

    std::set<OutPoint> own;
    for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
        const TxInput& in = tx.inputs[i];
        if (!own.insert(in.prevout).second)
            return {BroadcastStatus::Invalid, "input " + std::to_string(i) + " repeats an outpoint"};
        auto prev = txs_.find(in.prevout.tx_id);
        if (prev == txs_.end() || in.prevout.index >= prev->second.tx.outputs.size())
            return {BroadcastStatus::MissingInput, "input " + std::to_string(i) + " spends unknown " +
                                                       to_string(in.prevout)};
        if (auto s = spent_by_.find(in.prevout); s != spent_by_.end())
            return {BroadcastStatus::Conflict,
                    to_string(in.prevout) + " already spent by " + to_hex(s->second)};
        const TxOutput& spent = prev->second.tx.outputs[in.prevout.index];
        if (spent.value != in.prev_value)
            return {BroadcastStatus::ValueMismatch, "input " + std::to_string(i) + " declares the wrong value"};
        if (auto r = verify_input(tx, i, spent); !r)
            return {BroadcastStatus::ScriptFailure, "input " + std::to_string(i) + ": " + r.error};
    }
    if (static_cast<std::uint64_t>(tx.fee()) < params_.min_relay_fee)
        return {BroadcastStatus::FeeTooLow, "fee " + std::to_string(tx.fee()) + " below relay minimum"};

    txs_[id] = Entry{tx, arrivals_++, std::nullopt};
    for (const auto& in : tx.inputs)
        spent_by_[in.prevout] = id;
    lock.unlock();
    resolve_waiters();
    return {};
}

void ChainSim::include(ChainBlock& block, const Hash256& id)
{
    txs_.at(id).height = block.height;
    block.txs.push_back(id);
}

void ChainSim::produce_block()
{
    {
        std::lock_guard lock(mu_);
        ChainBlock block{blocks_.back().height + 1, loop_.now(), {}};

        struct Candidate {
            std::int64_t fee;
            std::uint64_t arrival;
            Hash256 id;
        };
        std::vector<Candidate> pool;
        for (const auto& [id, e] : txs_)
            if (!e.height)
                pool.push_back({e.tx.fee(), e.arrival, id});
        std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
            return a.fee != b.fee ? a.fee > b.fee : a.arrival < b.arrival;
        });

        // Parent-first: repeat passes until nothing more fits.
        std::vector<bool> taken(pool.size(), false);
        bool progress = true;
        while (progress && block.txs.size() < params_.block_capacity) {
            progress = false;
            for (std::size_t i = 0; i < pool.size() && block.txs.size() < params_.block_capacity; ++i) {
                if (taken[i])
                    continue;
                const auto& tx = txs_.at(pool[i].id).tx;
                const bool ready = std::all_of(tx.inputs.begin(), tx.inputs.end(), [&](const TxInput& in) {
                    return txs_.at(in.prevout.tx_id).height.has_value();
                });
                if (!ready)
                    continue;
                include(block, pool[i].id);
                taken[i] = true;
                progress = true;
            }
        }
        last_block_time_ = block.time;
        blocks_.push_back(std::move(block));
    }
    resolve_waiters();
}

void ChainSim::mine_block_now() { produce_block(); }

std::vector<Hash256> ChainSim::evict_closure(const std::vector<Hash256>& roots)
{
    std::vector<Hash256> out;
    std::vector<Hash256> work = roots;
    while (!work.empty()) {
        Hash256 id = work.back();
        work.pop_back();
        auto it = txs_.find(id);
        if (it == txs_.end())
            continue;
        const Transaction tx = it->second.tx;
        txs_.erase(it);
        evicted_.insert(id);
        out.push_back(id);
        for (const auto& in : tx.inputs)
            if (auto s = spent_by_.find(in.prevout); s != spent_by_.end() && s->second == id)
                spent_by_.erase(s);
        for (std::uint32_t k = 0; k < tx.outputs.size(); ++k)
            if (auto s = spent_by_.find({id, k}); s != spent_by_.end())
                work.push_back(s->second);
    }
    return out;
}

std::vector<Hash256> ChainSim::mine_conflicting(const Transaction& alt)
{
    std::vector<Hash256> evicted;
    {
        std::lock_guard lock(mu_);
        std::vector<Hash256> conflicted;
        for (const auto& in : alt.inputs) {
            auto s = spent_by_.find(in.prevout);
            if (s == spent_by_.end())
                continue;
            if (txs_.at(s->second).height)
                throw std::logic_error("conflicting spend of a confirmed output needs a reorg");
            conflicted.push_back(s->second);
        }
        evicted = evict_closure(conflicted);
    }
    auto r = broadcast(alt);
    if (!r.ok())
        throw std::runtime_error("conflicting transaction rejected: " + r.reason);
    produce_block();
    return evicted;
}

std::uint32_t ChainSim::depth_locked(const Hash256& id) const
{
    auto it = txs_.find(id);
    if (it == txs_.end() || !it->second.height)
        return 0;
    return static_cast<std::uint32_t>(blocks_.back().height - *it->second.height + 1);
}

ConfirmationStatus ChainSim::status(const Hash256& tx_id) const
{
    std::lock_guard lock(mu_);
    ConfirmationStatus s;
    auto it = txs_.find(tx_id);
    s.evicted = evicted_.count(tx_id) > 0;
    s.known = it != txs_.end();
    if (s.known) {
        s.height = it->second.height;
        s.depth = depth_locked(tx_id);
    }
    return s;
}

std::uint64_t ChainSim::tip_height() const
{
    std::lock_guard lock(mu_);
    return blocks_.back().height;
}

void ChainSim::await_confirmation(const Hash256& tx_id, std::uint32_t depth, std::function<void(AwaitResult)> done)
{
    {
        std::lock_guard lock(mu_);
        if (!txs_.count(tx_id) && !evicted_.count(tx_id))
            throw std::invalid_argument("await on unknown transaction " + to_hex(tx_id));
        waiters_.push_back({tx_id, depth, loop_.now(), std::move(done)});
    }
    // Resolve already-satisfied awaits through the loop so callers see a
    // consistent ordering.
    loop_.schedule_after(0.0, [this] { resolve_waiters(); });
}

void ChainSim::resolve_waiters()
{
    std::vector<std::pair<std::function<void(AwaitResult)>, AwaitResult>> ready;
    {
        std::lock_guard lock(mu_);
        const double now = loop_.now();
        std::vector<Waiter> keep;
        for (auto& w : waiters_) {
            if (evicted_.count(w.tx_id))
                ready.push_back({std::move(w.done), {true, now - w.since}});
            else if (depth_locked(w.tx_id) >= w.depth)
                ready.push_back({std::move(w.done), {false, now - w.since}});
            else
                keep.push_back(std::move(w));
        }
        waiters_ = std::move(keep);
    }
    for (auto& [cb, result] : ready)
        cb(result);
}

double ChainSim::wait_confirmation(const Hash256& tx_id, std::uint32_t depth)
{
    std::optional<AwaitResult> result;
    await_confirmation(tx_id, depth, [&](AwaitResult r) { result = r; });
    if (!loop_.run_until([&] { return result.has_value(); }))
        throw std::runtime_error("event loop drained before confirmation; is the chain started?");
    if (result->evicted)
        throw EvictedError(tx_id);
    return result->waited;
}

std::optional<Transaction> ChainSim::find_transaction(const Hash256& tx_id) const
{
    std::lock_guard lock(mu_);
    auto it = txs_.find(tx_id);
    if (it == txs_.end())
        return std::nullopt;
    return it->second.tx;
}

std::optional<Hash256> ChainSim::spender_of(const OutPoint& outpoint) const
{
    std::lock_guard lock(mu_);
    auto it = spent_by_.find(outpoint);
    if (it == spent_by_.end())
        return std::nullopt;
    return it->second;
}

std::vector<ChainBlock> ChainSim::blocks() const
{
    std::lock_guard lock(mu_);
    return blocks_;
}

std::vector<Hash256> ChainSim::mempool() const
{
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::uint64_t, Hash256>> pending;
    for (const auto& [id, e] : txs_)
        if (!e.height)
            pending.push_back({e.arrival, id});
    std::sort(pending.begin(), pending.end());
    std::vector<Hash256> out;
    for (auto& p : pending)
        out.push_back(p.second);
    return out;
}

std::vector<double> ChainSim::block_intervals() const
{
    std::lock_guard lock(mu_);
    // The last drawn interval belongs to a block that has not been mined yet.
    std::vector<double> out = intervals_;
    if (started_ && !out.empty())
        out.pop_back();
    return out;
}

std::vector<OutPoint> ChainSim::outputs_for(const Hash160& hash) const
{
    std::lock_guard lock(mu_);
    std::vector<OutPoint> out;
    for (const auto& [id, e] : txs_)
        for (std::uint32_t k = 0; k < e.tx.outputs.size(); ++k) {
            const auto& o = e.tx.outputs[k];
            if (o.as_key_hash() == hash || o.as_script_hash() == hash)
                out.push_back({id, k});
        }
    return out;
}

std::size_t ChainSim::evicted_count() const
{
    std::lock_guard lock(mu_);
    return evicted_.size();
}

// Publishing ------------------------------------------------------------------

PublishResult publish_sequence(ChainSim& chain, EventLoop& loop, const std::vector<Transaction>& txs, PublishMode mode)
{
    chain.start();
    PublishResult result;
    const double begin = loop.now();
    auto send = [&](const Transaction& tx) {
        auto r = chain.broadcast(tx);
        if (!r.ok())
            throw std::runtime_error("broadcast rejected (" + std::string(to_string(r.status)) + "): " + r.reason);
    };

    if (mode == PublishMode::NonGreedy) {
        for (const auto& tx : txs) {
            send(tx);
            result.waits.push_back(chain.wait_confirmation(tx.tx_id(), 1));
        }
    } else {
        for (const auto& tx : txs)
            send(tx);
        std::vector<std::optional<AwaitResult>> done(txs.size());
        for (std::size_t i = 0; i < txs.size(); ++i)
            chain.await_confirmation(txs[i].tx_id(), 1, [&done, i](AwaitResult r) { done[i] = r; });
        loop.run_until([&] { return std::all_of(done.begin(), done.end(), [](auto& d) { return d.has_value(); }); });
        for (std::size_t i = 0; i < txs.size(); ++i) {
            if (!done[i])
                throw std::runtime_error("event loop drained before confirmation");
            if (done[i]->evicted)
                throw EvictedError(txs[i].tx_id());
            result.waits.push_back(done[i]->waited);
        }
    }
    result.total = loop.now() - begin;
    return result;
}

} // namespace chorchain
