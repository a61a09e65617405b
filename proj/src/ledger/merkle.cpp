#include "ccl/ledger/merkle.hpp"
#include "ccl/common/error.hpp"
#include "ccl/crypto/crypto.hpp"

#include <array>

namespace ccl::ledger {

namespace {
constexpr std::uint8_t kInteriorPrefix = 0x80;

std::vector<std::vector<Hash256>> build_levels(std::span<const Hash256> leaves)
{
    std::vector<std::vector<Hash256>> levels;
    levels.emplace_back(leaves.begin(), leaves.end());
    while (levels.back().size() > 1)
    {
        const auto& below = levels.back();
        std::vector<Hash256> above;
        above.reserve((below.size() + 1) / 2);
        for (std::size_t i = 0; i < below.size(); i += 2)
        {
            const auto& right = i + 1 < below.size() ? below[i + 1] : below[i];
            above.push_back(hash_children(below[i], right));
        }
        levels.push_back(std::move(above));
    }
    return levels;
}

ProofPath path_from_levels(const std::vector<std::vector<Hash256>>& levels, std::size_t index)
{
    ProofPath path;
    for (std::size_t k = 0; k + 1 < levels.size(); ++k)
    {
        const auto& level = levels[k];
        if (index % 2 == 0)
        {
            const auto& sib = index + 1 < level.size() ? level[index + 1] : level[index];
            path.push_back({Side::Right, sib});
        }
        else
        {
            path.push_back({Side::Left, level[index - 1]});
        }
        index /= 2;
    }
    return path;
}
} // namespace

Hash256 hash_children(const Hash256& left, const Hash256& right)
{
    std::array<std::uint8_t, 65> buf;
    buf[0] = kInteriorPrefix;
    std::copy(left.bytes.begin(), left.bytes.end(), buf.begin() + 1);
    std::copy(right.bytes.begin(), right.bytes.end(), buf.begin() + 33);
    return crypto::sha256(ByteView{buf.data(), buf.size()});
}

Hash256 replay_path(const Hash256& leaf, std::span<const ProofStep> path)
{
    Hash256 acc = leaf;
    for (const auto& step : path)
        acc = step.side == Side::Right ? hash_children(acc, step.sibling) : hash_children(step.sibling, acc);
    return acc;
}

void MerkleTree::append(const Hash256& leaf)
{
    if (levels_.empty())
        levels_.emplace_back();
    levels_[0].push_back(leaf);
    for (std::size_t k = 0; levels_[k].size() > 1; ++k)
    {
        const auto& level = levels_[k];
        std::size_t parent = (level.size() - 1) / 2;
        const auto& left = level[2 * parent];
        const auto& right = 2 * parent + 1 < level.size() ? level[2 * parent + 1] : left;
        auto h = hash_children(left, right);
        if (k + 1 == levels_.size())
            levels_.emplace_back();
        auto& above = levels_[k + 1];
        if (parent < above.size())
            above[parent] = h;
        else
            above.push_back(h);
    }
}

Hash256 MerkleTree::root() const
{
    if (size() == 0)
        throw Error(ErrorCode::State, "root of empty tree");
    return levels_.back().front();
}

const std::vector<Hash256>& MerkleTree::leaves() const
{
    static const std::vector<Hash256> empty;
    return levels_.empty() ? empty : levels_[0];
}

void MerkleTree::truncate(std::size_t n)
{
    if (n >= size())
        return;
    std::vector<Hash256> keep(levels_[0].begin(), levels_[0].begin() + static_cast<std::ptrdiff_t>(n));
    rebuild_from(std::move(keep));
}

void MerkleTree::rebuild_from(std::vector<Hash256> leaves)
{
    levels_.clear();
    for (const auto& l : leaves)
        append(l);
}

Hash256 MerkleTree::root_at(std::size_t tree_size) const
{
    if (tree_size == 0 || tree_size > size())
        throw Error(ErrorCode::NotFound, "tree size out of range");
    if (tree_size == size())
        return root();
    return build_levels(std::span(levels_[0]).first(tree_size)).back().front();
}

ProofPath MerkleTree::path_at(std::size_t index, std::size_t tree_size) const
{
    if (tree_size == 0 || tree_size > size() || index >= tree_size)
        throw Error(ErrorCode::NotFound, "leaf index out of range");
    if (tree_size == size())
        return path_from_levels(levels_, index);
    return path_from_levels(build_levels(std::span(levels_[0]).first(tree_size)), index);
}

} // namespace ccl::ledger
