#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "pestgan/errors.hpp"
#include "pestgan/tensor.hpp"

namespace pestgan {
namespace ckpt {

inline constexpr char kMagic[8] = {'P', 'G', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
    write_u32(os, static_cast<uint32_t>(v));
    write_u32(os, static_cast<uint32_t>(v >> 32));
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ConfigError("corrupt checkpoint: truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t read_u64(std::istream& is) {
    uint64_t lo = read_u32(is);
    uint64_t hi = read_u32(is);
    return lo | (hi << 32);
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw ConfigError("corrupt checkpoint: truncated string");
    return s;
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(T)));
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    uint32_t rank = read_u32(is);
    if (rank > 8) throw ConfigError("corrupt checkpoint: bad tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(is));
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (!is) throw ConfigError("corrupt checkpoint: truncated tensor");
    return t;
}

}  // namespace ckpt
}  // namespace pestgan
