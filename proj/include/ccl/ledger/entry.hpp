#pragma once

#include "ccl/common/bytes.hpp"
#include "ccl/crypto/crypto.hpp"

#include <cstdint>
#include <string_view>

namespace ccl::ledger {

enum class EntryKind : std::uint8_t
{
    Governance = 0,
    App = 1,
    Signature = 2,
};

enum class Privacy : std::uint8_t
{
    Public = 0,
    Private = 1,
};

std::string_view kind_name(EntryKind kind);

/// One ledger record. For Private entries written in confidential mode the
/// payload is AEAD ciphertext under the service data key.
struct LedgerEntry
{
    std::uint64_t seqno = 0;
    EntryKind kind = EntryKind::App;
    Privacy privacy = Privacy::Public;
    Bytes payload;
    Hash256 digest;

    bool operator==(const LedgerEntry&) const = default;
};

/// Canonical digest preimage: kind(u8) ‖ privacy(u8) ‖ payload(u32 len + bytes) ‖ seqno(u64).
Bytes encode_digest_preimage(EntryKind kind, Privacy privacy, ByteView payload, std::uint64_t seqno);
Hash256 compute_digest(EntryKind kind, Privacy privacy, ByteView payload, std::uint64_t seqno);

/// Entry bytes as stored inside a ledger frame: digest preimage ‖ digest(32).
Bytes encode_entry(const LedgerEntry& entry);
/// Throws Error(Decode) on framing problems. Does not check the digest.
LedgerEntry decode_entry(ByteView bytes);

/// Payload of a Signature entry.
struct SignedRoot
{
    std::uint64_t tree_size = 0;
    Hash256 root;
    crypto::PublicKey service_identity;
    crypto::Signature signature{};

    bool operator==(const SignedRoot&) const = default;
};

/// Message covered by a root signature: "ccl-merkle-root-v1" ‖ root.
Bytes root_signing_message(const Hash256& root);

Bytes encode_signed_root(const SignedRoot& s);
SignedRoot decode_signed_root(ByteView bytes);

/// Associated data binding a private payload to its ledger position.
Bytes private_payload_ad(std::uint64_t seqno, EntryKind kind);

} // namespace ccl::ledger
