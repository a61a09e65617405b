#pragma once

// Emulated trusted execution environment. NOT SECURE: platform keys are
// ordinary software keys, so the trust boundary is modelled rather than
// enforced by hardware.

#include "ccl/common/bytes.hpp"
#include "ccl/crypto/crypto.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ccl::enclave {

/// Code identity: SHA-256 of the code blob.
struct Measurement
{
    Hash256 digest;

    auto operator<=>(const Measurement&) const = default;
    std::string hex() const { return digest.hex(); }
};

Measurement measure(ByteView code_blob);

/// Measured blob for a node: application policy bytes, a NUL separator and the build id.
Bytes node_code_blob(std::string_view app_policy, std::string_view build_id);

/// Software stand-in for a TEE platform: an attestation signing key plus a
/// sealing secret.
class Platform
{
  public:
    static Platform generate(std::string id);
    /// Deterministic platform derived from a label; for fixtures and desk deployments.
    static Platform from_label(std::string id, std::string_view label);

    const std::string& id() const { return id_; }
    const crypto::PublicKey& public_key() const { return signing_.public_key(); }
    crypto::Signature sign(ByteView message) const { return signing_.sign(message); }
    ByteView sealing_secret() const { return {secret_.data(), secret_.size()}; }

  private:
    Platform(std::string id, crypto::KeyPair signing, crypto::SymmetricKey secret)
        : id_(std::move(id)), signing_(std::move(signing)), secret_(secret)
    {
    }

    std::string id_;
    crypto::KeyPair signing_;
    crypto::SymmetricKey secret_;
};

struct AttestationQuote
{
    Measurement measurement;
    crypto::PublicKey node_identity;
    std::string platform_id;
    crypto::Signature signature{};

    bool operator==(const AttestationQuote&) const = default;
};

/// "ccl-quote-v1" ‖ platform_id ‖ measurement ‖ node_identity
Bytes quote_signing_message(const Measurement& m, const crypto::PublicKey& node_identity,
                            std::string_view platform_id);

AttestationQuote quote(const Measurement& measurement, const crypto::PublicKey& node_identity,
                       const Platform& platform);

struct TrustedPlatform
{
    std::string id;
    crypto::PublicKey key;

    bool operator==(const TrustedPlatform&) const = default;
};

enum class QuoteVerdict
{
    Accept,
    UnknownPlatform,
    UntrustedCode,
    BadSignature,
};

std::string_view verdict_name(QuoteVerdict v);

/// Accept iff the signature verifies under some trusted platform key and the
/// measurement is trusted. Signature checks run first.
QuoteVerdict verify_quote(const AttestationQuote& q, std::span<const Measurement> trusted_measurements,
                          std::span<const TrustedPlatform> trusted_platforms);

Bytes encode_quote(const AttestationQuote& q);
AttestationQuote decode_quote(ByteView bytes);

struct SealedBlob
{
    Measurement measurement;
    Bytes nonce;
    Bytes ciphertext;

    bool operator==(const SealedBlob&) const = default;
};

/// Key = KDF(platform sealing secret, "ccl-seal-v1" ‖ measurement).
SealedBlob seal(ByteView data, const Measurement& measurement, const Platform& platform);
/// Throws Error(Authentication) unless both measurement and platform match.
Bytes unseal(const SealedBlob& blob, const Measurement& measurement, const Platform& platform);

Bytes encode_sealed(const SealedBlob& b);
SealedBlob decode_sealed(ByteView bytes);

} // namespace ccl::enclave
