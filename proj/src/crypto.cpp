#include "chorchain/crypto.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/obj_mac.h>
#include <openssl/provider.h>

#include <memory>
#include <mutex>
#include <stdexcept>

namespace chorchain {

namespace {

struct BnDeleter {
    void operator()(BIGNUM* p) const { BN_clear_free(p); }
};
struct BnCtxDeleter {
    void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct PointDeleter {
    void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};

using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxDeleter>;
using PointPtr = std::unique_ptr<EC_POINT, PointDeleter>;
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

[[noreturn]] void openssl_failure(const char* what)
{
    throw std::runtime_error(std::string("openssl failure: ") + what);
}

BnPtr new_bn()
{
    BnPtr bn(BN_new());
    if (!bn)
        openssl_failure("BN_new");
    return bn;
}

BnPtr bn_from(ByteView be)
{
    BnPtr bn(BN_bin2bn(be.data(), static_cast<int>(be.size()), nullptr));
    if (!bn)
        openssl_failure("BN_bin2bn");
    return bn;
}

Hash256 bn_to32(const BIGNUM* bn)
{
    Hash256 out{};
    if (BN_bn2binpad(bn, out.data(), 32) != 32)
        openssl_failure("BN_bn2binpad");
    return out;
}

const EVP_MD* ripemd160_md()
{
    static const EVP_MD* md = [] {
        // RIPEMD-160 lives in the legacy provider on OpenSSL 3.
        OSSL_PROVIDER_load(nullptr, "legacy");
        OSSL_PROVIDER_load(nullptr, "default");
        EVP_MD* fetched = EVP_MD_fetch(nullptr, "RIPEMD160", nullptr);
        if (!fetched)
            openssl_failure("RIPEMD160 unavailable");
        return fetched;
    }();
    return md;
}

struct Curve {
    EC_GROUP* group = nullptr;
    BIGNUM* order = nullptr;
    BIGNUM* half_order = nullptr;

    Curve()
    {
        group = EC_GROUP_new_by_curve_name(NID_secp256k1);
        order = BN_new();
        half_order = BN_new();
        if (!group || !order || !half_order || !EC_GROUP_get_order(group, order, nullptr) ||
            !BN_rshift1(half_order, order))
            openssl_failure("secp256k1 setup");
    }
};

const Curve& curve()
{
    static const Curve c;
    return c;
}

Bytes der_integer(const Hash256& v)
{
    std::size_t start = 0;
    while (start < 31 && v[start] == 0)
        ++start;
    Bytes out;
    if (v[start] & 0x80)
        out.push_back(0);
    out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(start), v.end());
    return out;
}

Bytes encode_der(const Hash256& r, const Hash256& s)
{
    Bytes rb = der_integer(r);
    Bytes sb = der_integer(s);
    Bytes out;
    out.push_back(0x30);
    out.push_back(static_cast<std::uint8_t>(4 + rb.size() + sb.size()));
    out.push_back(0x02);
    out.push_back(static_cast<std::uint8_t>(rb.size()));
    out.insert(out.end(), rb.begin(), rb.end());
    out.push_back(0x02);
    out.push_back(static_cast<std::uint8_t>(sb.size()));
    out.insert(out.end(), sb.begin(), sb.end());
    return out;
}

/// RFC6979 section 3.2 with qlen = hlen = 256.
class NonceGenerator {
public:
    NonceGenerator(const Hash256& secret, const Hash256& digest_mod_n, ByteView extra)
    {
        v_.fill(0x01);
        k_.fill(0x00);
        seed(0x00, secret, digest_mod_n, extra);
        v_ = hmac_sha256(view(k_), view(v_));
        seed(0x01, secret, digest_mod_n, extra);
        v_ = hmac_sha256(view(k_), view(v_));
    }

    Hash256 next()
    {
        if (started_) {
            Bytes m(v_.begin(), v_.end());
            m.push_back(0x00);
            k_ = hmac_sha256(view(k_), view(m));
            v_ = hmac_sha256(view(k_), view(v_));
        }
        started_ = true;
        v_ = hmac_sha256(view(k_), view(v_));
        return v_;
    }

private:
    void seed(std::uint8_t tag, const Hash256& secret, const Hash256& h1, ByteView extra)
    {
        Bytes m(v_.begin(), v_.end());
        m.push_back(tag);
        m.insert(m.end(), secret.begin(), secret.end());
        m.insert(m.end(), h1.begin(), h1.end());
        m.insert(m.end(), extra.begin(), extra.end());
        k_ = hmac_sha256(view(k_), view(m));
    }

    Hash256 k_{};
    Hash256 v_{};
    bool started_ = false;
};

PointPtr decode_point(ByteView pubkey, BN_CTX* ctx)
{
    const Curve& c = curve();
    PointPtr p(EC_POINT_new(c.group));
    if (!p)
        openssl_failure("EC_POINT_new");
    if (pubkey.size() != 33 && pubkey.size() != 65)
        return nullptr;
    if (EC_POINT_oct2point(c.group, p.get(), pubkey.data(), pubkey.size(), ctx) != 1)
        return nullptr;
    if (EC_POINT_is_on_curve(c.group, p.get(), ctx) != 1 || EC_POINT_is_at_infinity(c.group, p.get()))
        return nullptr;
    return p;
}

} // namespace

Hash256 sha256(ByteView data)
{
    Hash256 out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
        openssl_failure("sha256");
    return out;
}

Hash256 double_sha256(ByteView data)
{
    Hash256 first = sha256(data);
    return sha256(view(first));
}

Hash160 ripemd160(ByteView data)
{
    Hash160 out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, ripemd160_md(), nullptr) != 1)
        openssl_failure("ripemd160");
    return out;
}

Hash160 hash160(ByteView data)
{
    Hash256 first = sha256(data);
    return ripemd160(view(first));
}

Hash256 hmac_sha256(ByteView key, ByteView data)
{
    Hash256 out{};
    unsigned int len = 0;
    if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
              out.data(), &len))
        openssl_failure("hmac");
    return out;
}

EcKey EcKey::from_secret(const Hash256& secret)
{
    const Curve& c = curve();
    BnCtxPtr ctx(BN_CTX_new());
    BnPtr d = bn_from(view(secret));
    if (BN_is_zero(d.get()) || BN_cmp(d.get(), c.order) >= 0)
        throw std::invalid_argument("secret scalar out of range");
    PointPtr q(EC_POINT_new(c.group));
    if (!q || EC_POINT_mul(c.group, q.get(), d.get(), nullptr, nullptr, ctx.get()) != 1)
        openssl_failure("EC_POINT_mul");
    PublicKey pub{};
    if (EC_POINT_point2oct(c.group, q.get(), POINT_CONVERSION_COMPRESSED, pub.data(), pub.size(),
                           ctx.get()) != pub.size())
        openssl_failure("point2oct");
    return EcKey(secret, pub);
}

EcKey EcKey::derive(ByteView seed_material)
{
    Hash256 candidate = sha256(seed_material);
    for (;;) {
        try {
            return from_secret(candidate);
        } catch (const std::invalid_argument&) {
            candidate = sha256(view(candidate));
        }
    }
}

Bytes EcKey::sign(const Hash256& digest) const
{
    for (std::uint32_t attempt = 0;; ++attempt) {
        Bytes der = detail::ecdsa_sign_der(secret_, digest, attempt);
        if (der.size() == 71 || der.size() == 72)
            return der;
    }
}

bool is_valid_public_key(ByteView pubkey)
{
    BnCtxPtr ctx(BN_CTX_new());
    return decode_point(pubkey, ctx.get()) != nullptr;
}

namespace detail {

Bytes ecdsa_sign_der(const Hash256& secret, const Hash256& digest, std::uint32_t attempt)
{
    const Curve& c = curve();
    BnCtxPtr ctx(BN_CTX_new());
    if (!ctx)
        openssl_failure("BN_CTX_new");

    BnPtr d = bn_from(view(secret));
    BnPtr z = bn_from(view(digest));
    BnPtr z_mod = new_bn();
    if (BN_nnmod(z_mod.get(), z.get(), c.order, ctx.get()) != 1)
        openssl_failure("BN_nnmod");
    const Hash256 h1 = bn_to32(z_mod.get());

    Bytes extra;
    if (attempt > 0) {
        extra.assign(32, 0);
        for (int i = 0; i < 4; ++i)
            extra[i] = static_cast<std::uint8_t>(attempt >> (8 * i));
    }
    NonceGenerator nonces(secret, h1, view(extra));

    PointPtr kg(EC_POINT_new(c.group));
    BnPtr x = new_bn(), r = new_bn(), s = new_bn(), kinv = new_bn(), tmp = new_bn();
    for (;;) {
        Hash256 kbytes = nonces.next();
        BnPtr k = bn_from(view(kbytes));
        if (BN_is_zero(k.get()) || BN_cmp(k.get(), c.order) >= 0)
            continue;
        if (EC_POINT_mul(c.group, kg.get(), k.get(), nullptr, nullptr, ctx.get()) != 1 ||
            EC_POINT_get_affine_coordinates(c.group, kg.get(), x.get(), nullptr, ctx.get()) != 1)
            openssl_failure("nonce point");
        if (BN_nnmod(r.get(), x.get(), c.order, ctx.get()) != 1)
            openssl_failure("r mod n");
        if (BN_is_zero(r.get()))
            continue;
        // s = k^-1 (z + r d) mod n
        if (!BN_mod_inverse(kinv.get(), k.get(), c.order, ctx.get()) ||
            BN_mod_mul(tmp.get(), r.get(), d.get(), c.order, ctx.get()) != 1 ||
            BN_mod_add(tmp.get(), tmp.get(), z_mod.get(), c.order, ctx.get()) != 1 ||
            BN_mod_mul(s.get(), kinv.get(), tmp.get(), c.order, ctx.get()) != 1)
            openssl_failure("s computation");
        if (BN_is_zero(s.get()))
            continue;
        if (BN_cmp(s.get(), c.half_order) > 0 && BN_sub(s.get(), c.order, s.get()) != 1)
            openssl_failure("low-s");
        return encode_der(bn_to32(r.get()), bn_to32(s.get()));
    }
}

std::optional<std::pair<Hash256, Hash256>> parse_der(ByteView der)
{
    if (der.size() < 8 || der.size() > 72 || der[0] != 0x30 || der[1] != der.size() - 2)
        return std::nullopt;
    auto read_int = [&](std::size_t& pos) -> std::optional<Hash256> {
        if (pos + 2 > der.size() || der[pos] != 0x02)
            return std::nullopt;
        std::size_t len = der[pos + 1];
        pos += 2;
        if (len == 0 || len > 33 || pos + len > der.size())
            return std::nullopt;
        if (der[pos] & 0x80)
            return std::nullopt; // negative
        if (len > 1 && der[pos] == 0 && !(der[pos + 1] & 0x80))
            return std::nullopt; // non-minimal padding
        ByteView body = der.subspan(pos, len);
        if (len == 33) {
            if (body[0] != 0)
                return std::nullopt;
            body = body.subspan(1);
        }
        Hash256 out{};
        std::copy(body.begin(), body.end(), out.end() - static_cast<std::ptrdiff_t>(body.size()));
        pos += len;
        return out;
    };
    std::size_t pos = 2;
    auto r = read_int(pos);
    if (!r)
        return std::nullopt;
    auto s = read_int(pos);
    if (!s || pos != der.size())
        return std::nullopt;
    return std::make_pair(*r, *s);
}

} // namespace detail

bool verify_signature(ByteView pubkey, const Hash256& digest, ByteView der_signature)
{
    auto rs = detail::parse_der(der_signature);
    if (!rs)
        return false;
    const Curve& c = curve();
    BnCtxPtr ctx(BN_CTX_new());
    PointPtr q = decode_point(pubkey, ctx.get());
    if (!q)
        return false;

    BnPtr r = bn_from(view(rs->first));
    BnPtr s = bn_from(view(rs->second));
    if (BN_is_zero(r.get()) || BN_is_zero(s.get()) || BN_cmp(r.get(), c.order) >= 0 ||
        BN_cmp(s.get(), c.half_order) > 0)
        return false;

    BnPtr z = bn_from(view(digest));
    BnPtr z_mod = new_bn(), w = new_bn(), u1 = new_bn(), u2 = new_bn(), x = new_bn(), v = new_bn();
    if (BN_nnmod(z_mod.get(), z.get(), c.order, ctx.get()) != 1 ||
        !BN_mod_inverse(w.get(), s.get(), c.order, ctx.get()) ||
        BN_mod_mul(u1.get(), z_mod.get(), w.get(), c.order, ctx.get()) != 1 ||
        BN_mod_mul(u2.get(), r.get(), w.get(), c.order, ctx.get()) != 1)
        openssl_failure("verify scalars");

    PointPtr point(EC_POINT_new(c.group));
    if (EC_POINT_mul(c.group, point.get(), u1.get(), q.get(), u2.get(), ctx.get()) != 1)
        openssl_failure("verify mul");
    if (EC_POINT_is_at_infinity(c.group, point.get()))
        return false;
    if (EC_POINT_get_affine_coordinates(c.group, point.get(), x.get(), nullptr, ctx.get()) != 1 ||
        BN_nnmod(v.get(), x.get(), c.order, ctx.get()) != 1)
        openssl_failure("verify x");
    return BN_cmp(v.get(), r.get()) == 0;
}

// Ed25519 ------------------------------------------------------------------

namespace {

PkeyPtr ed25519_private(const Hash256& seed)
{
    PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
    if (!key)
        openssl_failure("ed25519 key");
    return key;
}

} // namespace

IdentityKey IdentityKey::from_seed(const Hash256& seed)
{
    PkeyPtr key = ed25519_private(seed);
    IdentityPublicKey pub{};
    std::size_t len = pub.size();
    if (EVP_PKEY_get_raw_public_key(key.get(), pub.data(), &len) != 1 || len != pub.size())
        openssl_failure("ed25519 public key");
    return IdentityKey(seed, pub);
}

IdentitySignature IdentityKey::sign(ByteView message) const
{
    PkeyPtr key = ed25519_private(seed_);
    MdCtxPtr ctx(EVP_MD_CTX_new());
    IdentitySignature sig{};
    std::size_t len = sig.size();
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1)
        openssl_failure("ed25519 sign");
    return sig;
}

bool verify_identity_signature(const IdentityPublicKey& key, ByteView message,
                               const IdentitySignature& signature)
{
    PkeyPtr pkey(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, key.data(), key.size()));
    if (!pkey)
        return false;
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1)
        return false;
    return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                            message.size()) == 1;
}

// ChaCha20-Poly1305 ---------------------------------------------------------

Bytes aead_seal(const SymmetricKey& key, const AeadNonce& nonce, ByteView plaintext, ByteView aad)
{
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    Bytes out(plaintext.size() + kAeadTagSize);
    int len = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN, static_cast<int>(nonce.size()),
                            nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
        openssl_failure("aead init");
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        openssl_failure("aead aad");
    if (!plaintext.empty() && EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                                                static_cast<int>(plaintext.size())) != 1)
        openssl_failure("aead encrypt");
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + plaintext.size(), &len) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kAeadTagSize,
                            out.data() + plaintext.size()) != 1)
        openssl_failure("aead final");
    return out;
}

std::optional<Bytes> aead_open(const SymmetricKey& key, const AeadNonce& nonce, ByteView sealed,
                               ByteView aad)
{
    if (sealed.size() < kAeadTagSize)
        return std::nullopt;
    const std::size_t body = sealed.size() - kAeadTagSize;
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    Bytes out(body);
    int len = 0;
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN, static_cast<int>(nonce.size()),
                            nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
        openssl_failure("aead init");
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        return std::nullopt;
    if (body > 0 &&
        EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(body)) != 1)
        return std::nullopt;
    Bytes tag(sealed.begin() + static_cast<std::ptrdiff_t>(body), sealed.end());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kAeadTagSize, tag.data()) != 1)
        return std::nullopt;
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + body, &len) != 1)
        return std::nullopt;
    return out;
}

} // namespace chorchain
