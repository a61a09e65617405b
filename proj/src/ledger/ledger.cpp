#include "ccl/ledger/ledger.hpp"
#include "ccl/common/codec.hpp"

#include <iterator>

namespace ccl::ledger {

namespace fs = std::filesystem;

Bytes read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw Error(ErrorCode::Io, "read failed: " + path.string());
    return data;
}

FrameScan scan_frames(ByteView file)
{
    FrameScan scan;
    std::size_t pos = 0;
    while (pos < file.size())
    {
        if (file.size() - pos < 4)
        {
            scan.truncated = true;
            break;
        }
        auto len = load_u32le(file.data() + pos);
        if (file.size() - pos - 4 < len)
        {
            scan.truncated = true;
            break;
        }
        scan.entries.push_back(decode_entry(file.subspan(pos + 4, len)));
        scan.offsets.push_back(pos);
        pos += 4 + len;
        scan.complete_bytes = pos;
    }
    return scan;
}

Ledger::Ledger(fs::path path, LedgerOptions options) : path_(std::move(path)), options_(options) {}

Ledger Ledger::create(const fs::path& path, LedgerOptions options)
{
    if (fs::exists(path))
        throw Error(ErrorCode::Io, "ledger already exists: " + path.string());
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    Ledger l(path, options);
    l.out_.open(path, std::ios::binary | std::ios::out | std::ios::trunc);
    if (!l.out_)
        throw Error(ErrorCode::Io, "cannot create ledger " + path.string());
    return l;
}

Ledger Ledger::open(const fs::path& path, LedgerOptions options, bool recover_tail)
{
    auto bytes = read_file(path);
    FrameScan scan;
    try
    {
        scan = scan_frames(as_view(bytes));
    }
    catch (const Error& e)
    {
        throw Error(ErrorCode::Io, "corrupt ledger " + path.string() + ": " + e.what());
    }
    if (scan.truncated)
    {
        if (!recover_tail)
            throw Error(ErrorCode::Io, "ledger has an incomplete trailing frame");
        fs::resize_file(path, scan.complete_bytes);
    }
    Ledger l(path, options);
    for (std::size_t i = 0; i < scan.entries.size(); ++i)
    {
        if (scan.entries[i].seqno != i)
            throw Error(ErrorCode::Io, "ledger seqno gap at " + std::to_string(i));
        l.index_entry(std::move(scan.entries[i]), scan.offsets[i]);
    }
    l.file_bytes_ = scan.complete_bytes;
    l.out_.open(path, std::ios::binary | std::ios::out | std::ios::app);
    if (!l.out_)
        throw Error(ErrorCode::Io, "cannot open ledger for append " + path.string());
    return l;
}

void Ledger::index_entry(LedgerEntry e, std::uintmax_t frame_offset)
{
    tree_.append(e.digest);
    if (e.kind == EntryKind::Signature)
    {
        signatures_.emplace_back(e.seqno, decode_signed_root(e.payload));
        since_signature_ = 0;
    }
    else
    {
        ++since_signature_;
    }
    offsets_.push_back(frame_offset);
    entries_.push_back(std::move(e));
}

std::uintmax_t Ledger::write_frame(const LedgerEntry& e)
{
    auto bytes = encode_entry(e);
    std::uint8_t len[4];
    store_u32le(len, static_cast<std::uint32_t>(bytes.size()));
    out_.write(reinterpret_cast<const char*>(len), 4);
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out_.flush();
    if (!out_)
        throw Error(ErrorCode::Io, "ledger write failed: " + path_.string());
    return 4 + bytes.size();
}

std::uint64_t Ledger::append_raw(EntryKind kind, Privacy privacy, Bytes payload)
{
    LedgerEntry e;
    e.seqno = entries_.size();
    e.kind = kind;
    e.privacy = privacy;
    e.payload = std::move(payload);
    e.digest = compute_digest(e.kind, e.privacy, e.payload, e.seqno);
    auto offset = file_bytes_;
    file_bytes_ += write_frame(e);
    auto seqno = e.seqno;
    index_entry(std::move(e), offset);
    return seqno;
}

AppendResult Ledger::append(EntryKind kind, Privacy privacy, ByteView payload_plaintext)
{
    if (kind == EntryKind::Signature)
        throw Error(ErrorCode::Validation, "signature entries are produced by sign()");
    Bytes stored;
    if (privacy == Privacy::Private && options_.encrypt_private)
    {
        if (!data_key_)
            throw Error(ErrorCode::Config, "private append without a service data key");
        stored = crypto::aead_encrypt_deterministic(*data_key_, payload_plaintext,
                                                    as_view(private_payload_ad(entries_.size(), kind)));
    }
    else
    {
        stored.assign(payload_plaintext.begin(), payload_plaintext.end());
    }
    AppendResult result;
    result.seqno = append_raw(kind, privacy, std::move(stored));
    result.root = tree_.root();
    if (options_.signature_interval > 0 && since_signature_ >= options_.signature_interval && signer_)
        sign();
    return result;
}

std::optional<std::uint64_t> Ledger::sign()
{
    if (!signer_)
        throw Error(ErrorCode::Config, "ledger has no service signing key");
    if (since_signature_ == 0)
        return std::nullopt;
    SignedRoot s;
    s.tree_size = entries_.size();
    s.root = tree_.root();
    s.service_identity = signer_->public_key();
    s.signature = signer_->sign(as_view(root_signing_message(s.root)));
    return append_raw(EntryKind::Signature, Privacy::Public, encode_signed_root(s));
}

std::uint64_t Ledger::signed_size() const
{
    return signatures_.empty() ? 0 : signatures_.back().second.tree_size;
}

const LedgerEntry& Ledger::entry(std::uint64_t seqno) const
{
    if (seqno >= entries_.size())
        throw Error(ErrorCode::NotFound, "no ledger entry " + std::to_string(seqno));
    return entries_[seqno];
}

Bytes Ledger::plaintext(std::uint64_t seqno) const
{
    const auto& e = entry(seqno);
    if (e.privacy == Privacy::Public || !options_.encrypt_private)
        return e.payload;
    if (!data_key_)
        throw Error(ErrorCode::Config, "no data key to read private entry");
    return crypto::aead_decrypt(*data_key_, e.payload, as_view(private_payload_ad(e.seqno, e.kind)));
}

Receipt Ledger::get_receipt(std::uint64_t seqno) const
{
    if (seqno >= entries_.size())
        throw Error(ErrorCode::NotFound, "no ledger entry " + std::to_string(seqno));
    if (signatures_.empty() || seqno >= signatures_.back().second.tree_size)
        throw Error(ErrorCode::NotYetSigned, "entry " + std::to_string(seqno) + " not yet covered by a signature");
    const auto& signed_root = signatures_.back().second;
    Receipt r;
    r.seqno = seqno;
    r.entry_digest = entries_[seqno].digest;
    r.proof_path = tree_.path_at(seqno, signed_root.tree_size);
    r.root = signed_root.root;
    r.root_signature = signed_root.signature;
    r.service_identity = signed_root.service_identity;
    return r;
}

void Ledger::truncate(std::size_t n)
{
    if (n >= entries_.size())
        return;
    out_.close();
    fs::resize_file(path_, offsets_[n]);
    file_bytes_ = offsets_[n];
    entries_.resize(n);
    offsets_.resize(n);
    tree_.truncate(n);
    while (!signatures_.empty() && signatures_.back().first >= n)
        signatures_.pop_back();
    since_signature_ = 0;
    for (auto it = entries_.rbegin(); it != entries_.rend() && it->kind != EntryKind::Signature; ++it)
        ++since_signature_;
    out_.open(path_, std::ios::binary | std::ios::out | std::ios::app);
    if (!out_)
        throw Error(ErrorCode::Io, "cannot reopen ledger " + path_.string());
}

ChainVerdict verify_chain_bytes(ByteView file, const crypto::PublicKey& trusted)
{
    ChainVerdict v;
    MerkleTree tree;
    std::size_t pos = 0;
    std::uint64_t expected = 0;
    auto bad = [&](std::string detail) {
        v.status = ChainVerdict::Status::FirstBadSeqno;
        v.seqno = expected;
        v.detail = std::move(detail);
        return v;
    };
    while (pos < file.size())
    {
        if (file.size() - pos < 4 || file.size() - pos - 4 < load_u32le(file.data() + pos))
        {
            v.status = ChainVerdict::Status::IoError;
            if (expected > 0)
                v.seqno = expected - 1;
            v.detail = "truncated frame after " + std::to_string(expected) + " complete entries";
            return v;
        }
        auto len = load_u32le(file.data() + pos);
        LedgerEntry e;
        try
        {
            e = decode_entry(file.subspan(pos + 4, len));
        }
        catch (const Error& err)
        {
            return bad(std::string("undecodable entry: ") + err.what());
        }
        if (e.seqno != expected)
            return bad("seqno " + std::to_string(e.seqno) + " out of sequence");
        if (compute_digest(e.kind, e.privacy, e.payload, e.seqno) != e.digest)
            return bad("digest mismatch");
        if (e.kind == EntryKind::Signature)
        {
            SignedRoot s;
            try
            {
                s = decode_signed_root(e.payload);
            }
            catch (const Error&)
            {
                return bad("malformed signature payload");
            }
            if (e.privacy != Privacy::Public || s.tree_size != expected || expected == 0)
                return bad("signature entry has wrong coverage");
            if (s.root != tree.root())
                return bad("signed root does not match recomputed tree");
            if (s.service_identity != trusted)
                return bad("root signed by an untrusted service identity");
            if (!crypto::verify(s.service_identity, as_view(root_signing_message(s.root)), s.signature))
                return bad("root signature invalid");
        }
        tree.append(e.digest);
        pos += 4 + len;
        ++expected;
    }
    v.entries_checked = expected;
    return v;
}

ChainVerdict verify_chain(const fs::path& ledger_file, const crypto::PublicKey& trusted)
{
    Bytes bytes;
    try
    {
        bytes = read_file(ledger_file);
    }
    catch (const Error& e)
    {
        ChainVerdict v;
        v.status = ChainVerdict::Status::IoError;
        v.detail = e.what();
        return v;
    }
    return verify_chain_bytes(as_view(bytes), trusted);
}

} // namespace ccl::ledger
