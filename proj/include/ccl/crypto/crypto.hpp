#pragma once

// Thin wrappers over libsodium. Algorithms are fixed service-wide:
//   hash       SHA-256
//   signature  Ed25519 (deterministic)
//   AEAD       XChaCha20-Poly1305 (IETF), 24-byte nonce
//   KDF        keyed BLAKE2b-256

#include "ccl/common/bytes.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace ccl::crypto {

constexpr std::size_t kPublicKeySize = 32;
constexpr std::size_t kSignatureSize = 64;
constexpr std::size_t kSymmetricKeySize = 32;
constexpr std::size_t kNonceSize = 24;
constexpr std::size_t kTagSize = 16;

void init();

Hash256 sha256(ByteView data);
inline Hash256 sha256(std::string_view s)
{
    return sha256(ByteView{reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

class Sha256
{
  public:
    Sha256();
    Sha256& update(ByteView data);
    Hash256 finish();

  private:
    alignas(64) std::array<std::uint8_t, 128> state_{};
};

struct PublicKey
{
    std::array<std::uint8_t, kPublicKeySize> bytes{};

    auto operator<=>(const PublicKey&) const = default;
    ByteView view() const { return {bytes.data(), bytes.size()}; }
    std::string hex() const { return to_hex(view()); }
    static PublicKey from_hex(std::string_view hex);
    static PublicKey from_bytes(ByteView raw);
};

using Signature = std::array<std::uint8_t, kSignatureSize>;

Signature signature_from_bytes(ByteView raw);
inline std::string signature_hex(const Signature& s) { return to_hex({s.data(), s.size()}); }
Signature signature_from_hex(std::string_view hex);

/// Ed25519 signing key. Deterministic signatures; derived from a 32-byte seed.
class KeyPair
{
  public:
    static KeyPair generate();
    static KeyPair from_seed(ByteView seed);
    /// Seed derived from an arbitrary label; for fixtures and simulation.
    static KeyPair from_label(std::string_view label);

    KeyPair(const KeyPair&) = default;
    KeyPair& operator=(const KeyPair&) = default;
    ~KeyPair();

    const PublicKey& public_key() const { return public_; }
    Signature sign(ByteView message) const;
    Signature sign(std::string_view message) const
    {
        return sign(ByteView{reinterpret_cast<const std::uint8_t*>(message.data()), message.size()});
    }
    Bytes seed() const;

    /// Decrypts a box produced by `box_seal` for this key's public key.
    Bytes box_open(ByteView sealed) const;

  private:
    KeyPair() = default;

    PublicKey public_;
    std::array<std::uint8_t, 64> secret_{};
};

bool verify(const PublicKey& key, ByteView message, const Signature& sig);
inline bool verify(const PublicKey& key, std::string_view message, const Signature& sig)
{
    return verify(key, ByteView{reinterpret_cast<const std::uint8_t*>(message.data()), message.size()},
                  sig);
}

using SymmetricKey = std::array<std::uint8_t, kSymmetricKeySize>;

SymmetricKey random_key();
Bytes random_bytes(std::size_t n);

/// Authenticated encryption. Output layout: nonce(24) || ciphertext || tag(16).
Bytes aead_encrypt(const SymmetricKey& key, ByteView plaintext, ByteView associated,
                   ByteView nonce);
/// Nonce derived from the key, associated data and plaintext (deterministic, SIV-style).
Bytes aead_encrypt_deterministic(const SymmetricKey& key, ByteView plaintext, ByteView associated);
/// Throws Error(Authentication) on any tampering or wrong key.
Bytes aead_decrypt(const SymmetricKey& key, ByteView sealed, ByteView associated);

SymmetricKey kdf(ByteView secret, ByteView context);

/// Anonymous public-key encryption to an Ed25519 identity (converted to X25519).
Bytes box_seal(const PublicKey& recipient, ByteView plaintext);

} // namespace ccl::crypto
