#include "chorchain/dump.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace chorchain {

std::size_t ChainDump::tx_count() const
{
    std::size_t n = mempool.size();
    for (const auto& b : blocks)
        n += b.txs.size();
    return n;
}

MemoryChainView ChainDump::view() const
{
    MemoryChainView v;
    for (const auto& b : blocks)
        for (const auto& tx : b.txs)
            v.add(tx);
    for (const auto& tx : mempool)
        v.add(tx);
    return v;
}

std::string write_dump(const ChainDump& dump)
{
    std::string out = fmt::format("# chorchain-dump v1 seed={} block_mean={} capacity={} min_relay_fee={}\n",
                                  dump.params.seed, dump.params.block_mean, dump.params.block_capacity,
                                  dump.params.min_relay_fee);
    for (const auto& b : dump.blocks) {
        out += fmt::format("block {} {:.6f}\n", b.height, b.time);
        for (const auto& tx : b.txs)
            out += to_hex(tx.serialize()) + "\n";
    }
    out += "mempool\n";
    for (const auto& tx : dump.mempool)
        out += to_hex(tx.serialize()) + "\n";
    return out;
}

std::string write_dump(const ChainSim& chain)
{
    ChainDump d;
    d.params = chain.params();
    for (const auto& b : chain.blocks()) {
        DumpBlock db{b.height, b.time, {}};
        for (const auto& id : b.txs)
            db.txs.push_back(*chain.find_transaction(id));
        d.blocks.push_back(std::move(db));
    }
    for (const auto& id : chain.mempool())
        d.mempool.push_back(*chain.find_transaction(id));
    return write_dump(d);
}

namespace {

std::map<std::string, std::string> header_fields(const std::string& line, std::size_t lineno)
{
    static const std::string magic = "# chorchain-dump v1";
    if (line.rfind(magic, 0) != 0)
        throw DumpError(lineno, "missing '" + magic + "' header");
    std::map<std::string, std::string> out;
    std::istringstream in(line.substr(magic.size()));
    std::string kv;
    while (in >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw DumpError(lineno, "header field '" + kv + "' is not key=value");
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

} // namespace

ChainDump parse_dump(std::string_view text)
{
    ChainDump d;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    bool in_mempool = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        try {
            if (!header) {
                auto f = header_fields(line, lineno);
                if (f.count("seed"))
                    d.params.seed = std::stoull(f["seed"]);
                if (f.count("block_mean"))
                    d.params.block_mean = std::stod(f["block_mean"]);
                if (f.count("capacity"))
                    d.params.block_capacity = std::stoull(f["capacity"]);
                if (f.count("min_relay_fee"))
                    d.params.min_relay_fee = std::stoull(f["min_relay_fee"]);
                header = true;
                continue;
            }
            if (line.rfind("block ", 0) == 0) {
                if (in_mempool)
                    throw DumpError(lineno, "block after the mempool section");
                std::istringstream b(line.substr(6));
                DumpBlock blk;
                if (!(b >> blk.height >> blk.time))
                    throw DumpError(lineno, "expected 'block <height> <time>'");
                d.blocks.push_back(std::move(blk));
                continue;
            }
            if (line == "mempool") {
                in_mempool = true;
                continue;
            }
            Transaction tx = Transaction::deserialize(from_hex(line));
            if (in_mempool)
                d.mempool.push_back(std::move(tx));
            else if (d.blocks.empty())
                throw DumpError(lineno, "transaction before the first block line");
            else
                d.blocks.back().txs.push_back(std::move(tx));
        } catch (const DumpError&) {
            throw;
        } catch (const std::exception& e) {
            throw DumpError(lineno, e.what());
        }
    }
    if (!header)
        throw DumpError(lineno, "empty dump");
    return d;
}

ChainDump load_dump_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_dump(ss.str());
}

} // namespace chorchain
