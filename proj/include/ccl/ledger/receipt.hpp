#pragma once

#include "ccl/common/bytes.hpp"
#include "ccl/crypto/crypto.hpp"
#include "ccl/ledger/merkle.hpp"

#include <cstdint>

namespace ccl::ledger {

/// Offline-verifiable proof that an entry is covered by a signed root.
struct Receipt
{
    std::uint64_t seqno = 0;
    Hash256 entry_digest;
    ProofPath proof_path;
    Hash256 root;
    crypto::Signature root_signature{};
    crypto::PublicKey service_identity;

    bool operator==(const Receipt&) const = default;
};

/// seqno(u64) ‖ entry_digest(32) ‖ path_len(u32) ‖ {side(u8) ‖ sibling(32)}* ‖
/// root(32) ‖ root_signature(64) ‖ service_identity(32)
Bytes encode_receipt(const Receipt& r);
/// Throws Error(Decode) on malformed input.
Receipt decode_receipt(ByteView bytes);

/// Pure and offline. True iff the path reproduces the root, the path shape
/// matches the seqno, the signature verifies and the identity is the trusted one.
bool verify_receipt(const Receipt& receipt, const crypto::PublicKey& trusted_service_identity);

} // namespace ccl::ledger
