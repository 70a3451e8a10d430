#include "chorchain/script.hpp"

#include "chorchain/crypto.hpp"

#include <algorithm>

namespace chorchain {

namespace {

bool truthy(const Bytes& v)
{
    return std::any_of(v.begin(), v.end(), [](std::uint8_t b) { return b != 0; });
}

ScriptResult fail(std::string why) { return {false, std::move(why)}; }

} // namespace

ScriptResult eval_script(ByteView script, ScriptStack& stack, const Hash256& digest)
{
    ByteReader r(script);
    try {
        while (!r.empty()) {
            const std::size_t at = r.position();
            const std::uint8_t opcode = r.u8();
            if (opcode >= 1 && opcode <= 75) {
                stack.push_back(r.bytes(opcode));
                continue;
            }
            if (opcode == op::PUSHDATA1) {
                stack.push_back(r.bytes(r.u8()));
                continue;
            }
            auto need = [&](std::size_t n) { return stack.size() >= n; };
            switch (opcode) {
            case op::RETURN: return fail("OP_RETURN");
            case op::DROP:
                if (!need(1))
                    return fail("DROP on empty stack");
                stack.pop_back();
                break;
            case op::DUP:
                if (!need(1))
                    return fail("DUP on empty stack");
                stack.push_back(stack.back());
                break;
            case op::HASH160:
                if (!need(1))
                    return fail("HASH160 on empty stack");
                {
                    Hash160 h = hash160(stack.back());
                    stack.back().assign(h.begin(), h.end());
                }
                break;
            case op::EQUAL:
            case op::EQUALVERIFY: {
                if (!need(2))
                    return fail("EQUAL needs two items");
                const bool eq = stack[stack.size() - 1] == stack[stack.size() - 2];
                stack.pop_back();
                stack.pop_back();
                if (opcode == op::EQUALVERIFY) {
                    if (!eq)
                        return fail("EQUALVERIFY failed");
                } else {
                    stack.push_back(eq ? Bytes{1} : Bytes{});
                }
                break;
            }
            case op::CHECKSIG: {
                if (!need(2))
                    return fail("CHECKSIG needs two items");
                Bytes pubkey = std::move(stack.back());
                stack.pop_back();
                Bytes sig = std::move(stack.back());
                stack.pop_back();
                const bool ok = verify_signature(pubkey, digest, sig);
                stack.push_back(ok ? Bytes{1} : Bytes{});
                break;
            }
            default:
                return fail("unsupported opcode 0x" + to_hex(Bytes{opcode}) + " at offset " + std::to_string(at));
            }
        }
    } catch (const TruncatedInput&) {
        return fail("truncated push");
    }
    return {true, {}};
}

ScriptResult verify_input(const Transaction& tx, std::size_t index, const TxOutput& spent)
{
    if (index >= tx.inputs.size())
        return fail("input index out of range");
    const Hash256 digest = tx.signing_digest();

    if (!decode_unlocking(tx.inputs[index].unlocking))
        return fail("unlocking script is not push-only");
    ScriptStack stack;
    if (auto r = eval_script(tx.inputs[index].unlocking, stack, digest); !r)
        return r;
    ScriptStack unlocked = stack;

    if (auto r = eval_script(spent.script, stack, digest); !r)
        return r;
    if (stack.empty() || !truthy(stack.back()))
        return fail(spent.as_script_hash() ? "redeem script hash mismatch" : "signature check failed");

    if (spent.as_script_hash()) {
        Bytes redeem = std::move(unlocked.back());
        unlocked.pop_back();
        if (auto r = eval_script(redeem, unlocked, digest); !r)
            return r;
        if (unlocked.empty() || !truthy(unlocked.back()))
            return fail("redeem script evaluated to false");
    }
    return {true, {}};
}

} // namespace chorchain
