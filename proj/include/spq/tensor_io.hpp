#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "spq/tensor.hpp"

namespace spq {

// Flat tensor file format "SPQT":
//   magic 'S','P','Q','T', u8 version=1, u8 dtype (1=f32, 2=f64), u8 rank,
//   u8 reserved=0, rank x u64 LE dims, row-major LE payload.
enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

void write_spqt(std::ostream& os, const Tensor& t, Dtype dtype);
Tensor read_spqt(std::istream& is, Dtype* dtype_out = nullptr);

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype = Dtype::f64);
Tensor load_tensor(const std::string& path, Dtype* dtype_out = nullptr);

// Little-endian scalar helpers shared by the SPQM/SPQI writers.
void put_u8(std::ostream& os, std::uint8_t v);
void put_u16le(std::ostream& os, std::uint16_t v);
void put_u32le(std::ostream& os, std::uint32_t v);
void put_u64le(std::ostream& os, std::uint64_t v);
std::uint8_t get_u8(std::istream& is);
std::uint16_t get_u16le(std::istream& is);
std::uint32_t get_u32le(std::istream& is);
std::uint64_t get_u64le(std::istream& is);

}  // namespace spq
