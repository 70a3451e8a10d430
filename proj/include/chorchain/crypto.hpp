#pragma once

#include "chorchain/bytes.hpp"

#include <optional>

namespace chorchain {

Hash256 sha256(ByteView data);
Hash256 double_sha256(ByteView data);
Hash160 ripemd160(ByteView data);
/// RIPEMD-160 of SHA-256; used for script hashes and key hashes.
Hash160 hash160(ByteView data);
Hash256 hmac_sha256(ByteView key, ByteView data);

// secp256k1 ECDSA ----------------------------------------------------------

using PublicKey = FixedBytes<33>; // compressed SEC1 encoding

class EcKey {
public:
    /// Throws std::invalid_argument unless 0 < secret < n.
    static EcKey from_secret(const Hash256& secret);

    /// Deterministic key from arbitrary seed material (hash-and-retry).
    static EcKey derive(ByteView seed_material);

    const Hash256& secret() const { return secret_; }
    const PublicKey& public_key() const { return public_key_; }
    Hash160 key_hash() const { return hash160(view(public_key_)); }

    /// DER-encoded low-S signature over a 32-byte digest. The RFC6979 nonce is
    /// re-derived with an extra-entropy counter until the encoding is 71 or 72
    /// bytes long, which is what the process data block reserves.
    Bytes sign(const Hash256& digest) const;

    friend bool operator==(const EcKey& a, const EcKey& b) { return a.secret_ == b.secret_; }

private:
    EcKey(const Hash256& secret, const PublicKey& pub) : secret_(secret), public_key_(pub) {}

    Hash256 secret_;
    PublicKey public_key_;
};

bool is_valid_public_key(ByteView pubkey);

/// Strict DER + low-S verification.
bool verify_signature(ByteView pubkey, const Hash256& digest, ByteView der_signature);

namespace detail {

/// RFC6979 (HMAC-SHA256) ECDSA with optional extra-entropy counter; attempt 0
/// is the plain RFC6979 nonce. Returns the low-S DER encoding.
Bytes ecdsa_sign_der(const Hash256& secret, const Hash256& digest, std::uint32_t attempt);

/// (r, s) as 32-byte big-endian values; nullopt if not strict DER.
std::optional<std::pair<Hash256, Hash256>> parse_der(ByteView der);

} // namespace detail

// Identity (PKI) signatures ---------------------------------------------

using IdentityPublicKey = FixedBytes<32>;
using IdentitySignature = FixedBytes<64>;

/// Ed25519 signing pair used for participant identities, distinct from the
/// transaction keys.
class IdentityKey {
public:
    static IdentityKey from_seed(const Hash256& seed);

    const IdentityPublicKey& public_key() const { return public_key_; }
    IdentitySignature sign(ByteView message) const;

private:
    IdentityKey(const Hash256& seed, const IdentityPublicKey& pub) : seed_(seed), public_key_(pub) {}

    Hash256 seed_;
    IdentityPublicKey public_key_;
};

bool verify_identity_signature(const IdentityPublicKey& key, ByteView message,
                               const IdentitySignature& signature);

// Authenticated encryption ---------------------------------------------

using SymmetricKey = FixedBytes<32>;
using AeadNonce = FixedBytes<12>;
inline constexpr std::size_t kAeadTagSize = 16;

/// ChaCha20-Poly1305; returns ciphertext followed by the 16-byte tag.
Bytes aead_seal(const SymmetricKey& key, const AeadNonce& nonce, ByteView plaintext, ByteView aad);

/// nullopt when authentication fails.
std::optional<Bytes> aead_open(const SymmetricKey& key, const AeadNonce& nonce, ByteView sealed,
                               ByteView aad);

} // namespace chorchain
