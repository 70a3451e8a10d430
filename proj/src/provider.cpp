#include "chorchain/provider.hpp"

#include <httplib.h>
#include <json.hpp>

namespace chorchain {

using nlohmann::json;

// JSON ------------------------------------------------------------------------

namespace {

json output_json(const OutputRecord& r)
{
    json j{{"txid", to_hex(r.outpoint.tx_id)},
           {"n", r.outpoint.index},
           {"value", r.value},
           {"script", to_hex(r.script)}};
    j["spent_by"] = r.spent_by ? json(to_hex(*r.spent_by)) : json(nullptr);
    return j;
}

OutputRecord output_from(const json& j)
{
    OutputRecord r;
    r.outpoint = {fixed_from_hex<32>(j.at("txid").get<std::string>()), j.at("n").get<std::uint32_t>()};
    r.value = j.at("value").get<std::uint64_t>();
    r.script = from_hex(j.at("script").get<std::string>());
    if (!j.at("spent_by").is_null())
        r.spent_by = fixed_from_hex<32>(j.at("spent_by").get<std::string>());
    return r;
}

} // namespace

std::string to_json(const TxRecord& r)
{
    json j{{"txid", to_hex(r.tx.tx_id())},
           {"hex", to_hex(r.tx.serialize())},
           {"confirmed", r.confirmed},
           {"depth", r.depth}};
    j["height"] = r.height ? json(*r.height) : json(nullptr);
    return j.dump();
}

std::string to_json(const OutputRecord& r) { return output_json(r).dump(); }

std::string to_json(const AddressRecord& r)
{
    json outs = json::array();
    for (const auto& o : r.outputs)
        outs.push_back(output_json(o));
    return json{{"hash", to_hex(r.hash)}, {"outputs", outs}}.dump();
}

TxRecord tx_record_from_json(const std::string& text)
{
    json j = json::parse(text);
    TxRecord r;
    r.tx = Transaction::deserialize(from_hex(j.at("hex").get<std::string>()));
    r.confirmed = j.at("confirmed").get<bool>();
    r.depth = j.at("depth").get<std::uint32_t>();
    if (!j.at("height").is_null())
        r.height = j.at("height").get<std::uint64_t>();
    return r;
}

OutputRecord output_record_from_json(const std::string& text) { return output_from(json::parse(text)); }

AddressRecord address_record_from_json(const std::string& text)
{
    json j = json::parse(text);
    AddressRecord r;
    r.hash = fixed_from_hex<20>(j.at("hash").get<std::string>());
    for (const auto& o : j.at("outputs"))
        r.outputs.push_back(output_from(o));
    return r;
}

// Simulator-backed provider ----------------------------------------------------

void SimProvider::maybe_fail()
{
    ++calls_;
    int left = failures_.load();
    while (left > 0) {
        if (failures_.compare_exchange_weak(left, left - 1))
            throw ProviderError(ProviderError::Kind::Timeout, "provider timed out");
    }
}

TxRecord SimProvider::get_tx(const Hash256& tx_id)
{
    maybe_fail();
    auto tx = chain_.find_transaction(tx_id);
    if (!tx)
        throw ProviderError(ProviderError::Kind::NotFound, "unknown transaction " + to_hex(tx_id));
    auto st = chain_.status(tx_id);
    return {std::move(*tx), st.height.has_value(), st.depth, st.height};
}

OutputRecord SimProvider::get_output(const OutPoint& outpoint)
{
    maybe_fail();
    auto tx = chain_.find_transaction(outpoint.tx_id);
    if (!tx || outpoint.index >= tx->outputs.size())
        throw ProviderError(ProviderError::Kind::NotFound, "unknown output " + to_string(outpoint));
    const auto& o = tx->outputs[outpoint.index];
    return {outpoint, o.value, o.script, chain_.spender_of(outpoint)};
}

AddressRecord SimProvider::get_address(const Hash160& hash)
{
    maybe_fail();
    AddressRecord r{hash, {}};
    for (const auto& op : chain_.outputs_for(hash)) {
        auto tx = chain_.find_transaction(op.tx_id);
        const auto& o = tx->outputs[op.index];
        r.outputs.push_back({op, o.value, o.script, chain_.spender_of(op)});
    }
    return r;
}

// Retry -----------------------------------------------------------------------

template <typename F>
auto RetryingProvider::with_retry(F&& f) -> decltype(f())
{
    double delay = first_backoff_;
    for (int attempt = 1;; ++attempt) {
        try {
            return f();
        } catch (const ProviderError& e) {
            if (e.kind() != ProviderError::Kind::Timeout || attempt >= attempts_)
                throw;
        }
        total_backoff_ += delay;
        if (sleep_)
            sleep_(delay);
        delay *= 2;
    }
}

TxRecord RetryingProvider::get_tx(const Hash256& tx_id)
{
    return with_retry([&] { return inner_.get_tx(tx_id); });
}

AddressRecord RetryingProvider::get_address(const Hash160& hash)
{
    return with_retry([&] { return inner_.get_address(hash); });
}

OutputRecord RetryingProvider::get_output(const OutPoint& outpoint)
{
    return with_retry([&] { return inner_.get_output(outpoint); });
}

// HTTP server -------------------------------------------------------------------

struct ProviderServer::Impl {
    DataProvider& backend;
    httplib::Server server;
    std::thread thread;
    std::mutex mu; // providers are not required to be thread-safe

    explicit Impl(DataProvider& b) : backend(b) {}
};

namespace {

template <typename F>
void respond(httplib::Response& res, std::mutex& mu, F&& produce)
{
    try {
        std::lock_guard lock(mu);
        res.set_content(produce(), "application/json");
    } catch (const ProviderError& e) {
        res.status = e.kind() == ProviderError::Kind::NotFound ? 404 : 504;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
}

} // namespace

ProviderServer::ProviderServer(DataProvider& backend) : impl_(std::make_unique<Impl>(backend))
{
    auto& s = impl_->server;
    Impl* impl = impl_.get();
    s.Get(R"(/tx/([0-9a-f]{64}))", [impl](const httplib::Request& req, httplib::Response& res) {
        respond(res, impl->mu, [&] { return to_json(impl->backend.get_tx(fixed_from_hex<32>(req.matches[1].str()))); });
    });
    s.Get(R"(/addr/([0-9a-f]{40}))", [impl](const httplib::Request& req, httplib::Response& res) {
        respond(res, impl->mu,
                [&] { return to_json(impl->backend.get_address(fixed_from_hex<20>(req.matches[1].str()))); });
    });
    s.Get(R"(/output/([0-9a-f]{64})/(\d+))", [impl](const httplib::Request& req, httplib::Response& res) {
        respond(res, impl->mu, [&] {
            const OutPoint op{fixed_from_hex<32>(req.matches[1].str()),
                              static_cast<std::uint32_t>(std::stoul(req.matches[2].str()))};
            return to_json(impl->backend.get_output(op));
        });
    });
}

ProviderServer::~ProviderServer() { stop(); }

int ProviderServer::start()
{
    const int port = impl_->server.bind_to_any_port("127.0.0.1");
    if (port <= 0)
        throw std::runtime_error("provider server could not bind");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void ProviderServer::stop()
{
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

// HTTP client -------------------------------------------------------------------

HttpProvider::HttpProvider(std::string host, int port, double timeout_seconds)
    : host_(std::move(host)), port_(port), timeout_(timeout_seconds)
{
}

std::string HttpProvider::get(const std::string& path)
{
    httplib::Client client(host_, port_);
    const auto usec = static_cast<time_t>(timeout_ * 1e6);
    client.set_connection_timeout(usec / 1000000, usec % 1000000);
    client.set_read_timeout(usec / 1000000, usec % 1000000);
    auto res = client.Get(path);
    if (!res)
        throw ProviderError(ProviderError::Kind::Timeout, "request " + path + " failed: " + httplib::to_string(res.error()));
    if (res->status == 404)
        throw ProviderError(ProviderError::Kind::NotFound, "not found: " + path);
    if (res->status == 504)
        throw ProviderError(ProviderError::Kind::Timeout, "upstream timeout: " + path);
    if (res->status != 200)
        throw std::runtime_error("provider answered " + std::to_string(res->status) + " for " + path);
    return res->body;
}

TxRecord HttpProvider::get_tx(const Hash256& tx_id) { return tx_record_from_json(get("/tx/" + to_hex(tx_id))); }

AddressRecord HttpProvider::get_address(const Hash160& hash)
{
    return address_record_from_json(get("/addr/" + to_hex(hash)));
}

OutputRecord HttpProvider::get_output(const OutPoint& outpoint)
{
    return output_record_from_json(
        get("/output/" + to_hex(outpoint.tx_id) + "/" + std::to_string(outpoint.index)));
}

// Chain view adapter --------------------------------------------------------------

std::optional<Transaction> ProviderChainView::find_transaction(const Hash256& tx_id) const
{
    ++queries_;
    try {
        return provider_.get_tx(tx_id).tx;
    } catch (const ProviderError& e) {
        if (e.kind() == ProviderError::Kind::NotFound)
            return std::nullopt;
        throw;
    }
}

std::optional<Hash256> ProviderChainView::spender_of(const OutPoint& outpoint) const
{
    ++queries_;
    try {
        return provider_.get_output(outpoint).spent_by;
    } catch (const ProviderError& e) {
        if (e.kind() == ProviderError::Kind::NotFound)
            return std::nullopt;
        throw;
    }
}

} // namespace chorchain
