#include "ccl/consensus/storage.hpp"
#include "ccl/common/codec.hpp"

#include <iterator>

namespace ccl::consensus {

namespace fs = std::filesystem;

void MemoryStorage::write_log(std::uint64_t first_index, std::span<const LogRecord> records)
{
    log_.resize(first_index - 1);
    log_.insert(log_.end(), records.begin(), records.end());
}

FileStorage::FileStorage(fs::path dir) : dir_(std::move(dir))
{
    fs::create_directories(dir_);
    load();
    log_out_.open(dir_ / "raft.log", std::ios::binary | std::ios::app);
    if (!log_out_)
        throw Error(ErrorCode::Io, "cannot open raft log in " + dir_.string());
}

void FileStorage::load()
{
    auto state_path = dir_ / "raft.state";
    if (fs::exists(state_path))
    {
        std::ifstream in(state_path, std::ios::binary);
        Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        Reader rd(as_view(data));
        hard_.term = rd.u64();
        if (rd.u8())
            hard_.voted_for = rd.str();
    }
    auto log_path = dir_ / "raft.log";
    if (!fs::exists(log_path))
        return;
    std::ifstream in(log_path, std::ios::binary);
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (data.size() - pos >= 4)
    {
        auto len = load_u32le(data.data() + pos);
        if (data.size() - pos - 4 < len)
            break;
        Reader rd(ByteView(data).subspan(pos + 4, len));
        auto index = rd.u64();
        auto record = decode_log_record(rd.raw(rd.remaining()));
        if (index == 0 || index > log_.size() + 1)
            throw Error(ErrorCode::Io, "raft log frame out of order");
        log_.resize(index - 1);
        log_.push_back(std::move(record));
        pos += 4 + len;
    }
    if (pos != data.size())
        fs::resize_file(log_path, pos);
}

void FileStorage::save_hard_state(const HardState& hs)
{
    Writer w;
    w.u64(hs.term).u8(hs.voted_for ? 1 : 0);
    if (hs.voted_for)
        w.str(*hs.voted_for);
    auto tmp = dir_ / "raft.state.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
        if (!out)
            throw Error(ErrorCode::Io, "cannot write raft state");
    }
    fs::rename(tmp, dir_ / "raft.state");
    hard_ = hs;
}

void FileStorage::write_log(std::uint64_t first_index, std::span<const LogRecord> records)
{
    Writer w;
    auto index = first_index;
    for (const auto& r : records)
    {
        Writer frame;
        frame.u64(index++).raw(as_view(encode_log_record(r)));
        w.bytes(frame.buffer());
    }
    if (records.empty() && first_index <= log_.size())
    {
        // Pure truncation: rewrite the file.
        log_.resize(first_index - 1);
        log_out_.close();
        Writer all;
        std::uint64_t i = 1;
        for (const auto& r : log_)
        {
            Writer frame;
            frame.u64(i++).raw(as_view(encode_log_record(r)));
            all.bytes(frame.buffer());
        }
        std::ofstream out(dir_ / "raft.log", std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(all.buffer().data()), static_cast<std::streamsize>(all.buffer().size()));
        out.close();
        log_out_.open(dir_ / "raft.log", std::ios::binary | std::ios::app);
        return;
    }
    log_out_.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
    log_out_.flush();
    if (!log_out_)
        throw Error(ErrorCode::Io, "raft log write failed");
    log_.resize(first_index - 1);
    log_.insert(log_.end(), records.begin(), records.end());
}

} // namespace ccl::consensus
