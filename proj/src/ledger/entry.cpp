#include "ccl/ledger/entry.hpp"
#include "ccl/common/codec.hpp"

namespace ccl::ledger {

std::string_view kind_name(EntryKind kind)
{
    switch (kind)
    {
    case EntryKind::Governance: return "governance";
    case EntryKind::App: return "app";
    case EntryKind::Signature: return "signature";
    }
    return "unknown";
}

Bytes encode_digest_preimage(EntryKind kind, Privacy privacy, ByteView payload, std::uint64_t seqno)
{
    Writer w;
    w.u8(static_cast<std::uint8_t>(kind)).u8(static_cast<std::uint8_t>(privacy)).bytes(payload).u64(seqno);
    return std::move(w).take();
}

Hash256 compute_digest(EntryKind kind, Privacy privacy, ByteView payload, std::uint64_t seqno)
{
    return crypto::sha256(as_view(encode_digest_preimage(kind, privacy, payload, seqno)));
}

Bytes encode_entry(const LedgerEntry& entry)
{
    auto out = encode_digest_preimage(entry.kind, entry.privacy, entry.payload, entry.seqno);
    out.insert(out.end(), entry.digest.bytes.begin(), entry.digest.bytes.end());
    return out;
}

LedgerEntry decode_entry(ByteView bytes)
{
    Reader r(bytes);
    LedgerEntry e;
    auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(EntryKind::Signature))
        throw Error(ErrorCode::Decode, "unknown entry kind " + std::to_string(kind));
    e.kind = static_cast<EntryKind>(kind);
    auto privacy = r.u8();
    if (privacy > static_cast<std::uint8_t>(Privacy::Private))
        throw Error(ErrorCode::Decode, "unknown privacy class " + std::to_string(privacy));
    e.privacy = static_cast<Privacy>(privacy);
    e.payload = r.bytes();
    e.seqno = r.u64();
    e.digest = r.hash();
    r.expect_done();
    return e;
}

Bytes root_signing_message(const Hash256& root)
{
    static constexpr std::string_view kDomain = "ccl-merkle-root-v1";
    Bytes msg(kDomain.begin(), kDomain.end());
    msg.insert(msg.end(), root.bytes.begin(), root.bytes.end());
    return msg;
}

Bytes encode_signed_root(const SignedRoot& s)
{
    Writer w;
    w.u64(s.tree_size).hash(s.root).raw(s.service_identity.view()).raw({s.signature.data(), s.signature.size()});
    return std::move(w).take();
}

SignedRoot decode_signed_root(ByteView bytes)
{
    Reader r(bytes);
    SignedRoot s;
    s.tree_size = r.u64();
    s.root = r.hash();
    s.service_identity = crypto::PublicKey::from_bytes(r.raw(crypto::kPublicKeySize));
    s.signature = crypto::signature_from_bytes(r.raw(crypto::kSignatureSize));
    r.expect_done();
    return s;
}

Bytes private_payload_ad(std::uint64_t seqno, EntryKind kind)
{
    Writer w;
    w.str("ccl-private-v1").u64(seqno).u8(static_cast<std::uint8_t>(kind));
    return std::move(w).take();
}

} // namespace ccl::ledger
