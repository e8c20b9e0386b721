#include "spq/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace spq {

namespace {

[[noreturn]] void io_fail(const std::string& msg) { throw std::runtime_error("SPQT: " + msg); }

}  // namespace

void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void put_u16le(std::ostream& os, std::uint16_t v) {
    put_u8(os, static_cast<std::uint8_t>(v & 0xFF));
    put_u8(os, static_cast<std::uint8_t>(v >> 8));
}

void put_u32le(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) put_u8(os, static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64le(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) put_u8(os, static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint8_t get_u8(std::istream& is) {
    int c = is.get();
    if (c == EOF) io_fail("unexpected end of stream");
    return static_cast<std::uint8_t>(c);
}

std::uint16_t get_u16le(std::istream& is) {
    std::uint16_t v = get_u8(is);
    v |= static_cast<std::uint16_t>(get_u8(is)) << 8;
    return v;
}

std::uint32_t get_u32le(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(is)) << (8 * i);
    return v;
}

std::uint64_t get_u64le(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(get_u8(is)) << (8 * i);
    return v;
}

void write_spqt(std::ostream& os, const Tensor& t, Dtype dtype) {
    os.write("SPQT", 4);
    put_u8(os, 1);
    put_u8(os, static_cast<std::uint8_t>(dtype));
    if (t.rank() > 255) io_fail("rank too large");
    put_u8(os, static_cast<std::uint8_t>(t.rank()));
    put_u8(os, 0);
    for (std::size_t d : t.shape) put_u64le(os, d);
    if (dtype == Dtype::f64) {
        for (double v : t.data) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            put_u64le(os, bits);
        }
    } else {
        for (double v : t.data) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            put_u32le(os, bits);
        }
    }
}

Tensor read_spqt(std::istream& is, Dtype* dtype_out) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "SPQT", 4) != 0) io_fail("bad magic");
    if (get_u8(is) != 1) io_fail("unsupported version");
    const auto dtype = static_cast<Dtype>(get_u8(is));
    if (dtype != Dtype::f32 && dtype != Dtype::f64) io_fail("unknown dtype");
    const std::size_t rank = get_u8(is);
    if (get_u8(is) != 0) io_fail("reserved byte not zero");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
        d = static_cast<std::size_t>(get_u64le(is));
        if (d == 0) io_fail("zero dimension");
    }
    Tensor t(dims);
    if (dtype == Dtype::f64) {
        for (auto& v : t.data) v = std::bit_cast<double>(get_u64le(is));
    } else {
        for (auto& v : t.data) v = std::bit_cast<float>(get_u32le(is));
    }
    if (dtype_out) *dtype_out = dtype;
    return t;
}

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) io_fail("cannot open " + path + " for writing");
    write_spqt(os, t, dtype);
    if (!os) io_fail("write failed: " + path);
}

Tensor load_tensor(const std::string& path, Dtype* dtype_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) io_fail("cannot open " + path);
    return read_spqt(is, dtype_out);
}

}  // namespace spq
