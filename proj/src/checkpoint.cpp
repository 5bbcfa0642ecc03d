#include "dadet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "dadet/common.hpp"

namespace dadet {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'D', 'E', 'T', 'C', 'K', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    char buf[8];
    in.read(buf, 8);
    if (!in) throw IoError("read_archive: truncated file " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& path) {
    std::uint64_t n = get_u64(in, path);
    if (n > (1u << 20)) throw IoError("read_archive: implausible string length in " + path);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError("read_archive: truncated string in " + path);
    return s;
}

}  // namespace

void write_archive(const std::string& path, const Archive& archive) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_archive: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, archive.meta.size());
    for (const auto& [key, value] : archive.meta) {
        put_string(out, key);
        put_string(out, value);
    }
    put_u64(out, archive.arrays.size());
    for (const auto& [name, tensor] : archive.arrays) {
        put_string(out, name);
        put_u64(out, tensor.shape.size());
        for (int d : tensor.shape) put_u64(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    }
    if (!out) throw IoError("write_archive: short write to " + path);
}

Archive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_archive: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("read_archive: bad magic in " + path);
    Archive archive;
    std::uint64_t meta_count = get_u64(in, path);
    for (std::uint64_t i = 0; i < meta_count; ++i) {
        std::string key = get_string(in, path);
        archive.meta[key] = get_string(in, path);
    }
    std::uint64_t array_count = get_u64(in, path);
    for (std::uint64_t i = 0; i < array_count; ++i) {
        std::string name = get_string(in, path);
        std::uint64_t ndim = get_u64(in, path);
        if (ndim > 8) throw IoError("read_archive: implausible rank in " + path);
        std::vector<int> shape;
        for (std::uint64_t d = 0; d < ndim; ++d)
            shape.push_back(static_cast<int>(get_u64(in, path)));
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!in) throw IoError("read_archive: truncated array " + name + " in " + path);
        archive.arrays.emplace(std::move(name), std::move(t));
    }
    return archive;
}

}  // namespace dadet
