#include "ccl/ledger/receipt.hpp"
#include "ccl/common/codec.hpp"
#include "ccl/ledger/entry.hpp"

namespace ccl::ledger {

Bytes encode_receipt(const Receipt& r)
{
    Writer w;
    w.u64(r.seqno).hash(r.entry_digest).u32(static_cast<std::uint32_t>(r.proof_path.size()));
    for (const auto& step : r.proof_path)
        w.u8(static_cast<std::uint8_t>(step.side)).hash(step.sibling);
    w.hash(r.root).raw({r.root_signature.data(), r.root_signature.size()}).raw(r.service_identity.view());
    return std::move(w).take();
}

Receipt decode_receipt(ByteView bytes)
{
    Reader rd(bytes);
    Receipt r;
    r.seqno = rd.u64();
    r.entry_digest = rd.hash();
    auto n = rd.u32();
    if (n > 64)
        throw Error(ErrorCode::Decode, "proof path too long");
    r.proof_path.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
    {
        auto side = rd.u8();
        if (side > 1)
            throw Error(ErrorCode::Decode, "invalid proof side");
        r.proof_path.push_back({static_cast<Side>(side), rd.hash()});
    }
    r.root = rd.hash();
    r.root_signature = crypto::signature_from_bytes(rd.raw(crypto::kSignatureSize));
    r.service_identity = crypto::PublicKey::from_bytes(rd.raw(crypto::kPublicKeySize));
    rd.expect_done();
    return r;
}

bool verify_receipt(const Receipt& receipt, const crypto::PublicKey& trusted_service_identity)
{
    if (receipt.service_identity != trusted_service_identity)
        return false;
    if (receipt.proof_path.size() >= 64)
        return false;
    // The sides encode the leaf index bit by bit; it must equal the seqno.
    std::uint64_t index = 0;
    for (std::size_t k = 0; k < receipt.proof_path.size(); ++k)
        if (receipt.proof_path[k].side == Side::Left)
            index |= std::uint64_t{1} << k;
    if (index != receipt.seqno)
        return false;
    if (replay_path(receipt.entry_digest, receipt.proof_path) != receipt.root)
        return false;
    return crypto::verify(receipt.service_identity, as_view(root_signing_message(receipt.root)),
                          receipt.root_signature);
}

} // namespace ccl::ledger
