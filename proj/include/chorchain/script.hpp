#pragma once

#include "chorchain/wire.hpp"

#include <string>

namespace chorchain {

struct ScriptResult {
    bool ok = false;
    std::string error;

    explicit operator bool() const { return ok; }
};

using ScriptStack = std::vector<Bytes>;

/// Runs a script over the supported opcodes (pushes, DROP, DUP, HASH160,
/// EQUAL, EQUALVERIFY, CHECKSIG, RETURN). CHECKSIG checks against `digest`.
ScriptResult eval_script(ByteView script, ScriptStack& stack, const Hash256& digest);

/// Unlocking script of input `index` against the output it spends, with the
/// script-hash rule applied when the locking script is a script-hash lock.
ScriptResult verify_input(const Transaction& tx, std::size_t index, const TxOutput& spent);

} // namespace chorchain
