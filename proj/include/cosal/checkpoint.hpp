#pragma once

// Flat binary parameter container:
//   "CSK1" | version u32 | records...
//   record = name length u32 | UTF-8 name | rank u32 | extents u32 x rank | f32 payload
// All integers and floats little-endian. Records run to end of file.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosal/tensor.hpp"

namespace cosal {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
    std::string name;
    BasicTensor<float> tensor;
};

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
    if (pos + 4 > buf.size()) throw CheckpointError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
    std::string buf(kCheckpointMagic, 4);
    detail::put_u32(buf, kCheckpointVersion);
    for (const auto& r : records) {
        detail::put_u32(buf, static_cast<std::uint32_t>(r.name.size()));
        buf += r.name;
        detail::put_u32(buf, static_cast<std::uint32_t>(r.tensor.rank()));
        for (auto e : r.tensor.shape()) detail::put_u32(buf, static_cast<std::uint32_t>(e));
        for (float f : r.tensor.values()) detail::put_u32(buf, std::bit_cast<std::uint32_t>(f));
    }
    return buf;
}

inline std::vector<CheckpointRecord> decode_checkpoint(const std::string& buf) {
    if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
        throw CheckpointError("not a checkpoint: bad magic bytes");
    }
    std::size_t pos = 4;
    const std::uint32_t version = detail::get_u32(buf, pos);
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    std::vector<CheckpointRecord> records;
    while (pos < buf.size()) {
        CheckpointRecord r;
        const std::uint32_t name_len = detail::get_u32(buf, pos);
        if (pos + name_len > buf.size()) throw CheckpointError("checkpoint truncated in record name");
        r.name = buf.substr(pos, name_len);
        pos += name_len;
        const std::uint32_t rank = detail::get_u32(buf, pos);
        Shape shape(rank);
        for (auto& e : shape) e = detail::get_u32(buf, pos);
        std::vector<float> values(element_count(shape));
        for (auto& f : values) f = std::bit_cast<float>(detail::get_u32(buf, pos));
        r.tensor = BasicTensor<float>(std::move(shape), std::move(values));
        records.push_back(std::move(r));
    }
    return records;
}

inline void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    const std::string buf = encode_checkpoint(records);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

inline std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(buf);
}

}  // namespace cosal
