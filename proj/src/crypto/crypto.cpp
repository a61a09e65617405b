#include "ccl/crypto/crypto.hpp"
#include "ccl/common/error.hpp"

#include <sodium.h>

#include <algorithm>
#include <mutex>

namespace ccl::crypto {

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

void init()
{
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0)
            throw Error(ErrorCode::Config, "libsodium initialisation failed");
    });
}

namespace {
struct AutoInit
{
    AutoInit() { init(); }
} auto_init;
} // namespace

Hash256 sha256(ByteView data)
{
    Hash256 h;
    crypto_hash_sha256(h.bytes.data(), data.data(), data.size());
    return h;
}

Sha256::Sha256()
{
    crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

Sha256& Sha256::update(ByteView data)
{
    crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                              data.data(), data.size());
    return *this;
}

Hash256 Sha256::finish()
{
    Hash256 h;
    crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                             h.bytes.data());
    return h;
}

PublicKey PublicKey::from_bytes(ByteView raw)
{
    if (raw.size() != kPublicKeySize)
        throw Error(ErrorCode::Parse, "public key must be 32 bytes");
    PublicKey k;
    std::copy(raw.begin(), raw.end(), k.bytes.begin());
    return k;
}

PublicKey PublicKey::from_hex(std::string_view hex) { return from_bytes(as_view(ccl::from_hex(hex))); }

Signature signature_from_bytes(ByteView raw)
{
    if (raw.size() != kSignatureSize)
        throw Error(ErrorCode::Parse, "signature must be 64 bytes");
    Signature s;
    std::copy(raw.begin(), raw.end(), s.begin());
    return s;
}

Signature signature_from_hex(std::string_view hex) { return signature_from_bytes(as_view(from_hex(hex))); }

KeyPair KeyPair::generate()
{
    init();
    KeyPair kp;
    crypto_sign_ed25519_keypair(kp.public_.bytes.data(), kp.secret_.data());
    return kp;
}

KeyPair KeyPair::from_seed(ByteView seed)
{
    if (seed.size() != crypto_sign_ed25519_SEEDBYTES)
        throw Error(ErrorCode::Parse, "key seed must be 32 bytes");
    KeyPair kp;
    crypto_sign_ed25519_seed_keypair(kp.public_.bytes.data(), kp.secret_.data(), seed.data());
    return kp;
}

KeyPair KeyPair::from_label(std::string_view label)
{
    auto h = sha256(std::string("ccl-key-label:") + std::string(label));
    return from_seed(h.view());
}

KeyPair::~KeyPair() { sodium_memzero(secret_.data(), secret_.size()); }

Signature KeyPair::sign(ByteView message) const
{
    Signature sig;
    crypto_sign_ed25519_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
}

Bytes KeyPair::seed() const
{
    Bytes out(crypto_sign_ed25519_SEEDBYTES);
    crypto_sign_ed25519_sk_to_seed(out.data(), secret_.data());
    return out;
}

Bytes KeyPair::box_open(ByteView sealed) const
{
    if (sealed.size() < crypto_box_SEALBYTES)
        throw Error(ErrorCode::Authentication, "sealed box too short");
    std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> xpk{};
    std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> xsk{};
    if (crypto_sign_ed25519_pk_to_curve25519(xpk.data(), public_.bytes.data()) != 0)
        throw Error(ErrorCode::Authentication, "key conversion failed");
    crypto_sign_ed25519_sk_to_curve25519(xsk.data(), secret_.data());
    Bytes out(sealed.size() - crypto_box_SEALBYTES);
    int rc = crypto_box_seal_open(out.data(), sealed.data(), sealed.size(), xpk.data(), xsk.data());
    sodium_memzero(xsk.data(), xsk.size());
    if (rc != 0)
        throw Error(ErrorCode::Authentication, "sealed box authentication failed");
    return out;
}

bool verify(const PublicKey& key, ByteView message, const Signature& sig)
{
    return crypto_sign_ed25519_verify_detached(sig.data(), message.data(), message.size(),
                                               key.bytes.data()) == 0;
}

SymmetricKey random_key()
{
    init();
    SymmetricKey k;
    randombytes_buf(k.data(), k.size());
    return k;
}

Bytes random_bytes(std::size_t n)
{
    init();
    Bytes out(n);
    randombytes_buf(out.data(), n);
    return out;
}

Bytes aead_encrypt(const SymmetricKey& key, ByteView plaintext, ByteView associated, ByteView nonce)
{
    if (nonce.size() != kNonceSize)
        throw Error(ErrorCode::Config, "AEAD nonce must be 24 bytes");
    Bytes out(kNonceSize + plaintext.size() + kTagSize);
    std::copy(nonce.begin(), nonce.end(), out.begin());
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + kNonceSize, &clen, plaintext.data(),
                                               plaintext.size(), associated.data(), associated.size(),
                                               nullptr, nonce.data(), key.data());
    out.resize(kNonceSize + clen);
    return out;
}

Bytes aead_encrypt_deterministic(const SymmetricKey& key, ByteView plaintext, ByteView associated)
{
    // Nonce = BLAKE2b(key, "nonce" || len(ad) || ad || plaintext), truncated.
    std::array<std::uint8_t, kNonceSize> nonce{};
    crypto_generichash_state st;
    crypto_generichash_init(&st, key.data(), key.size(), nonce.size());
    static constexpr std::uint8_t label[] = {'n', 'o', 'n', 'c', 'e'};
    crypto_generichash_update(&st, label, sizeof(label));
    std::uint8_t len[8];
    for (int i = 0; i < 8; ++i)
        len[i] = static_cast<std::uint8_t>(std::uint64_t(associated.size()) >> (8 * i));
    crypto_generichash_update(&st, len, sizeof(len));
    crypto_generichash_update(&st, associated.data(), associated.size());
    crypto_generichash_update(&st, plaintext.data(), plaintext.size());
    crypto_generichash_final(&st, nonce.data(), nonce.size());
    return aead_encrypt(key, plaintext, associated, {nonce.data(), nonce.size()});
}

Bytes aead_decrypt(const SymmetricKey& key, ByteView sealed, ByteView associated)
{
    if (sealed.size() < kNonceSize + kTagSize)
        throw Error(ErrorCode::Authentication, "ciphertext too short");
    Bytes out(sealed.size() - kNonceSize - kTagSize);
    unsigned long long mlen = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr, sealed.data() + kNonceSize,
                                                   sealed.size() - kNonceSize, associated.data(),
                                                   associated.size(), sealed.data(), key.data()) != 0)
        throw Error(ErrorCode::Authentication, "authenticated decryption failed");
    out.resize(mlen);
    return out;
}

SymmetricKey kdf(ByteView secret, ByteView context)
{
    if (secret.size() < crypto_generichash_KEYBYTES_MIN || secret.size() > crypto_generichash_KEYBYTES_MAX)
        throw Error(ErrorCode::Config, "kdf secret has invalid length");
    SymmetricKey out;
    crypto_generichash(out.data(), out.size(), context.data(), context.size(), secret.data(),
                       secret.size());
    return out;
}

Bytes box_seal(const PublicKey& recipient, ByteView plaintext)
{
    std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> xpk{};
    if (crypto_sign_ed25519_pk_to_curve25519(xpk.data(), recipient.bytes.data()) != 0)
        throw Error(ErrorCode::Validation, "recipient key is not a valid Ed25519 point");
    Bytes out(plaintext.size() + crypto_box_SEALBYTES);
    crypto_box_seal(out.data(), plaintext.data(), plaintext.size(), xpk.data());
    return out;
}

} // namespace ccl::crypto
