#pragma once

// Binary Merkle tree over entry digests. Leaves are the entry digests
// themselves; interior nodes are SHA-256(0x80 ‖ left ‖ right). A level with an
// odd node count pairs its last node with a copy of itself.

#include "ccl/common/bytes.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ccl::ledger {

enum class Side : std::uint8_t
{
    Left = 0,  // sibling is on the left
    Right = 1, // sibling is on the right
};

struct ProofStep
{
    Side side = Side::Right;
    Hash256 sibling;

    bool operator==(const ProofStep&) const = default;
};

using ProofPath = std::vector<ProofStep>;

Hash256 hash_children(const Hash256& left, const Hash256& right);

/// Replays a proof path upward from a leaf digest.
Hash256 replay_path(const Hash256& leaf, std::span<const ProofStep> path);

/// Incrementally maintained tree; O(log n) per append.
class MerkleTree
{
  public:
    void append(const Hash256& leaf);
    std::size_t size() const { return levels_.empty() ? 0 : levels_[0].size(); }
    /// Root of the full current tree. Requires size() > 0.
    Hash256 root() const;
    const std::vector<Hash256>& leaves() const;
    void truncate(std::size_t n);

    /// Root of the tree over the first `tree_size` leaves.
    Hash256 root_at(std::size_t tree_size) const;
    /// Inclusion path for `index` in the tree over the first `tree_size` leaves.
    ProofPath path_at(std::size_t index, std::size_t tree_size) const;

  private:
    void rebuild_from(std::vector<Hash256> leaves);

    std::vector<std::vector<Hash256>> levels_;
};

} // namespace ccl::ledger
