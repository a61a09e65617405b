#pragma once

#include "ccl/common/error.hpp"
#include "ccl/ledger/entry.hpp"
#include "ccl/ledger/merkle.hpp"
#include "ccl/ledger/receipt.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace ccl::ledger {

/// Root signing cadence: a Signature entry is appended after this many
/// non-signature entries. Non-normative; 0 disables automatic signing.
constexpr std::size_t kDefaultSignatureInterval = 10;

struct LedgerOptions
{
    std::size_t signature_interval = kDefaultSignatureInterval;
    /// When false (non-confidential baseline) Private payloads are stored as-is.
    bool encrypt_private = true;
};

struct AppendResult
{
    std::uint64_t seqno = 0;
    Hash256 root;
};

/// Append-only, file-backed Merkle ledger. Single writer; the ledger file is a
/// sequence of frames `[u32 little-endian length][entry bytes]`.
class Ledger
{
  public:
    /// Creates a new ledger file; refuses to overwrite an existing one.
    static Ledger create(const std::filesystem::path& path, LedgerOptions options = {});
    /// Opens an existing ledger. An incomplete trailing frame is cut off when
    /// `recover_tail` is set, otherwise it is an I/O error.
    static Ledger open(const std::filesystem::path& path, LedgerOptions options = {},
                       bool recover_tail = true);

    Ledger(Ledger&&) = default;
    Ledger& operator=(Ledger&&) = default;

    void set_data_key(std::optional<crypto::SymmetricKey> key) { data_key_ = key; }
    void set_signer(std::optional<crypto::KeyPair> signer) { signer_ = std::move(signer); }
    bool has_signer() const { return signer_.has_value(); }

    AppendResult append(EntryKind kind, Privacy privacy, ByteView payload_plaintext);
    /// Appends a Signature entry over all current entries. Returns its seqno,
    /// or nullopt when there is nothing new to sign.
    std::optional<std::uint64_t> sign();

    Receipt get_receipt(std::uint64_t seqno) const;

    std::size_t size() const { return entries_.size(); }
    const LedgerEntry& entry(std::uint64_t seqno) const;
    const std::vector<LedgerEntry>& entries() const { return entries_; }
    /// Payload with private entries decrypted (requires the data key).
    Bytes plaintext(std::uint64_t seqno) const;
    Hash256 root() const { return tree_.root(); }
    /// Number of leaves covered by the latest signed root (0 if none).
    std::uint64_t signed_size() const;
    std::size_t unsigned_count() const { return since_signature_; }
    std::uintmax_t file_bytes() const { return file_bytes_; }
    const std::filesystem::path& path() const { return path_; }

    /// Drops entries with seqno >= n (crash recovery).
    void truncate(std::size_t n);

  private:
    Ledger(std::filesystem::path path, LedgerOptions options);
    std::uintmax_t write_frame(const LedgerEntry& e);
    void index_entry(LedgerEntry e, std::uintmax_t frame_offset);
    std::uint64_t append_raw(EntryKind kind, Privacy privacy, Bytes payload);

    std::filesystem::path path_;
    LedgerOptions options_;
    std::ofstream out_;
    std::vector<LedgerEntry> entries_;
    std::vector<std::uintmax_t> offsets_;
    std::vector<std::pair<std::uint64_t, SignedRoot>> signatures_;
    MerkleTree tree_;
    std::size_t since_signature_ = 0;
    std::uintmax_t file_bytes_ = 0;
    std::optional<crypto::SymmetricKey> data_key_;
    std::optional<crypto::KeyPair> signer_;
};

/// Outcome of an offline audit of a ledger file.
struct ChainVerdict
{
    enum class Status
    {
        Ok,
        FirstBadSeqno,
        IoError,
    };

    Status status = Status::Ok;
    /// FirstBadSeqno: the offending seqno. IoError: last complete seqno, if any.
    std::optional<std::uint64_t> seqno;
    std::string detail;
    std::uint64_t entries_checked = 0;

    bool ok() const { return status == Status::Ok; }
};

/// Recomputes every digest and every signed root of a ledger file.
ChainVerdict verify_chain(const std::filesystem::path& ledger_file,
                          const crypto::PublicKey& trusted_service_identity);
ChainVerdict verify_chain_bytes(ByteView file_bytes, const crypto::PublicKey& trusted_service_identity);

struct FrameScan
{
    std::vector<LedgerEntry> entries;
    std::vector<std::uintmax_t> offsets;
    std::uintmax_t complete_bytes = 0;
    bool truncated = false;
};

/// Splits a ledger file into decoded entries; stops at the first incomplete frame.
FrameScan scan_frames(ByteView file_bytes);
Bytes read_file(const std::filesystem::path& path);

} // namespace ccl::ledger
