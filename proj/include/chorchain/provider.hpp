#pragma once

#include "chorchain/chain.hpp"
#include "chorchain/chain_view.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

namespace chorchain {

struct TxRecord {
    Transaction tx;
    bool confirmed = false;
    std::uint32_t depth = 0;
    std::optional<std::uint64_t> height;
};

struct OutputRecord {
    OutPoint outpoint;
    std::uint64_t value = 0;
    Bytes script;
    std::optional<Hash256> spent_by;
};

struct AddressRecord {
    Hash160 hash{};
    std::vector<OutputRecord> outputs;
};

class ProviderError : public std::runtime_error {
public:
    enum class Kind { NotFound, Timeout };

    ProviderError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Remote blockchain data source in the style of a block-explorer API.
class DataProvider {
public:
    virtual ~DataProvider() = default;

    virtual TxRecord get_tx(const Hash256& tx_id) = 0;
    /// Outputs locked to `hash` as key hash or script hash.
    virtual AddressRecord get_address(const Hash160& hash) = 0;
    virtual OutputRecord get_output(const OutPoint& outpoint) = 0;
};

/// Reads straight from a simulator. `fail_next(n)` makes the next n calls
/// time out.
class SimProvider : public DataProvider {
public:
    explicit SimProvider(const ChainSim& chain) : chain_(chain) {}

    TxRecord get_tx(const Hash256& tx_id) override;
    AddressRecord get_address(const Hash160& hash) override;
    OutputRecord get_output(const OutPoint& outpoint) override;

    void fail_next(int calls) { failures_ = calls; }
    std::size_t calls() const { return calls_; }

private:
    void maybe_fail();

    const ChainSim& chain_;
    std::atomic<int> failures_{0};
    std::atomic<std::size_t> calls_{0};
};

/// Retries timeouts with exponential backoff. `sleep` receives each delay in
/// seconds; by default delays are only accumulated.
class RetryingProvider : public DataProvider {
public:
    explicit RetryingProvider(DataProvider& inner, int attempts = 3, double first_backoff = 0.05,
                              std::function<void(double)> sleep = {})
        : inner_(inner), attempts_(attempts), first_backoff_(first_backoff), sleep_(std::move(sleep))
    {
    }

    TxRecord get_tx(const Hash256& tx_id) override;
    AddressRecord get_address(const Hash160& hash) override;
    OutputRecord get_output(const OutPoint& outpoint) override;

    double total_backoff() const { return total_backoff_; }

private:
    template <typename F>
    auto with_retry(F&& f) -> decltype(f());

    DataProvider& inner_;
    int attempts_;
    double first_backoff_;
    std::function<void(double)> sleep_;
    double total_backoff_ = 0.0;
};

/// Serves a provider over HTTP: /tx/{id}, /addr/{hash}, /output/{txid}/{n}.
class ProviderServer {
public:
    explicit ProviderServer(DataProvider& backend);
    ~ProviderServer();
    ProviderServer(const ProviderServer&) = delete;
    ProviderServer& operator=(const ProviderServer&) = delete;

    /// Binds to a free port on 127.0.0.1 and serves in a background thread.
    int start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Client for ProviderServer (or any service speaking the same JSON).
class HttpProvider : public DataProvider {
public:
    HttpProvider(std::string host, int port, double timeout_seconds = 2.0);

    TxRecord get_tx(const Hash256& tx_id) override;
    AddressRecord get_address(const Hash160& hash) override;
    OutputRecord get_output(const OutPoint& outpoint) override;

private:
    std::string get(const std::string& path);

    std::string host_;
    int port_;
    double timeout_;
};

/// ChainView on top of a provider; counts the queries it makes.
class ProviderChainView : public ChainView {
public:
    explicit ProviderChainView(DataProvider& provider) : provider_(provider) {}

    std::optional<Transaction> find_transaction(const Hash256& tx_id) const override;
    std::optional<Hash256> spender_of(const OutPoint& outpoint) const override;

    std::size_t queries() const { return queries_; }

private:
    DataProvider& provider_;
    mutable std::size_t queries_ = 0;
};

// JSON forms used on the wire.
std::string to_json(const TxRecord& r);
std::string to_json(const OutputRecord& r);
std::string to_json(const AddressRecord& r);
TxRecord tx_record_from_json(const std::string& text);
OutputRecord output_record_from_json(const std::string& text);
AddressRecord address_record_from_json(const std::string& text);

} // namespace chorchain
