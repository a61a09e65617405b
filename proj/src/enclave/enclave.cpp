#include "ccl/enclave/enclave.hpp"
#include "ccl/common/codec.hpp"

#include <algorithm>

namespace ccl::enclave {

namespace {
crypto::SymmetricKey sealing_key(const Platform& platform, const Measurement& m)
{
    Writer ctx;
    ctx.str("ccl-seal-v1").hash(m.digest);
    return crypto::kdf(platform.sealing_secret(), ctx.buffer());
}
} // namespace

Measurement measure(ByteView code_blob) { return {crypto::sha256(code_blob)}; }

Bytes node_code_blob(std::string_view app_policy, std::string_view build_id)
{
    Bytes blob(app_policy.begin(), app_policy.end());
    blob.push_back(0);
    blob.insert(blob.end(), build_id.begin(), build_id.end());
    return blob;
}

Platform Platform::generate(std::string id)
{
    return Platform(std::move(id), crypto::KeyPair::generate(), crypto::random_key());
}

Platform Platform::from_label(std::string id, std::string_view label)
{
    auto signing = crypto::KeyPair::from_label("platform-signing:" + std::string(label));
    auto secret = crypto::sha256("platform-sealing:" + std::string(label));
    crypto::SymmetricKey key;
    std::copy(secret.bytes.begin(), secret.bytes.end(), key.begin());
    return Platform(std::move(id), std::move(signing), key);
}

Bytes quote_signing_message(const Measurement& m, const crypto::PublicKey& node_identity,
                            std::string_view platform_id)
{
    Writer w;
    w.str("ccl-quote-v1").str(platform_id).hash(m.digest).raw(node_identity.view());
    return std::move(w).take();
}

AttestationQuote quote(const Measurement& measurement, const crypto::PublicKey& node_identity,
                       const Platform& platform)
{
    AttestationQuote q;
    q.measurement = measurement;
    q.node_identity = node_identity;
    q.platform_id = platform.id();
    q.signature = platform.sign(as_view(quote_signing_message(measurement, node_identity, platform.id())));
    return q;
}

std::string_view verdict_name(QuoteVerdict v)
{
    switch (v)
    {
    case QuoteVerdict::Accept: return "Accept";
    case QuoteVerdict::UnknownPlatform: return "UnknownPlatform";
    case QuoteVerdict::UntrustedCode: return "UntrustedCode";
    case QuoteVerdict::BadSignature: return "BadSignature";
    }
    return "Unknown";
}

QuoteVerdict verify_quote(const AttestationQuote& q, std::span<const Measurement> trusted_measurements,
                          std::span<const TrustedPlatform> trusted_platforms)
{
    auto msg = quote_signing_message(q.measurement, q.node_identity, q.platform_id);
    bool known_id = false;
    bool signed_ok = false;
    for (const auto& p : trusted_platforms)
    {
        if (p.id == q.platform_id)
        {
            known_id = true;
            signed_ok = signed_ok || crypto::verify(p.key, as_view(msg), q.signature);
        }
    }
    if (!known_id)
        return QuoteVerdict::UnknownPlatform;
    if (!signed_ok)
        return QuoteVerdict::BadSignature;
    if (std::find(trusted_measurements.begin(), trusted_measurements.end(), q.measurement) ==
        trusted_measurements.end())
        return QuoteVerdict::UntrustedCode;
    return QuoteVerdict::Accept;
}

Bytes encode_quote(const AttestationQuote& q)
{
    Writer w;
    w.hash(q.measurement.digest).raw(q.node_identity.view()).str(q.platform_id).raw({q.signature.data(), q.signature.size()});
    return std::move(w).take();
}

AttestationQuote decode_quote(ByteView bytes)
{
    Reader r(bytes);
    AttestationQuote q;
    q.measurement.digest = r.hash();
    q.node_identity = crypto::PublicKey::from_bytes(r.raw(crypto::kPublicKeySize));
    q.platform_id = r.str();
    q.signature = crypto::signature_from_bytes(r.raw(crypto::kSignatureSize));
    r.expect_done();
    return q;
}

SealedBlob seal(ByteView data, const Measurement& measurement, const Platform& platform)
{
    auto key = sealing_key(platform, measurement);
    auto nonce = crypto::random_bytes(crypto::kNonceSize);
    auto sealed = crypto::aead_encrypt(key, data, measurement.digest.view(), as_view(nonce));
    SealedBlob b;
    b.measurement = measurement;
    b.nonce = nonce;
    b.ciphertext.assign(sealed.begin() + crypto::kNonceSize, sealed.end());
    return b;
}

Bytes unseal(const SealedBlob& blob, const Measurement& measurement, const Platform& platform)
{
    auto key = sealing_key(platform, measurement);
    Bytes sealed = blob.nonce;
    sealed.insert(sealed.end(), blob.ciphertext.begin(), blob.ciphertext.end());
    return crypto::aead_decrypt(key, as_view(sealed), measurement.digest.view());
}

Bytes encode_sealed(const SealedBlob& b)
{
    Writer w;
    w.hash(b.measurement.digest).bytes(b.nonce).bytes(b.ciphertext);
    return std::move(w).take();
}

SealedBlob decode_sealed(ByteView bytes)
{
    Reader r(bytes);
    SealedBlob b;
    b.measurement.digest = r.hash();
    b.nonce = r.bytes();
    b.ciphertext = r.bytes();
    r.expect_done();
    return b;
}

} // namespace ccl::enclave
