#pragma once

#include "chorchain/chain.hpp"
#include "chorchain/chain_view.hpp"

#include <stdexcept>
#include <string>

namespace chorchain {

class DumpError : public std::runtime_error {
public:
    DumpError(std::size_t line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line)
    {
    }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct DumpBlock {
    std::uint64_t height = 0;
    double time = 0.0;
    std::vector<Transaction> txs;
};

/// Text form:
///   # chorchain-dump v1 seed=<u64> block_mean=<s> capacity=<n> min_relay_fee=<sat>
///   block <height> <time>
///   <tx hex>            one per line
///   mempool
///   <tx hex>
struct ChainDump {
    ChainParams params;
    std::vector<DumpBlock> blocks;
    std::vector<Transaction> mempool;

    std::size_t tx_count() const;
    /// Every transaction, blocks first, in dump order.
    MemoryChainView view() const;
};

std::string write_dump(const ChainSim& chain);
std::string write_dump(const ChainDump& dump);
ChainDump parse_dump(std::string_view text);
ChainDump load_dump_file(const std::string& path);

} // namespace chorchain
