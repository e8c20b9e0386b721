#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "spq/pq_head.hpp"
#include "spq/tensor.hpp"

namespace spq {

// Packs M sub-codes of `bits` bits each, MSB-first within each sub-code,
// sub-codes in ascending m from the most significant end of the stream.
// Each item is byte-aligned.
std::vector<std::uint8_t> pack_code(const std::uint32_t* indices, std::size_t m,
                                    std::size_t bits);
std::vector<std::uint32_t> unpack_code(const std::uint8_t* bytes, std::size_t m,
                                       std::size_t bits);

// Per-query squared distances to every codeword, f32 as stored on the
// search path.
struct LookupTable {
    std::size_t num_books = 0;
    std::size_t num_codewords = 0;
    std::vector<float> dists;  // [M,K]

    float at(std::size_t m, std::size_t k) const { return dists[m * num_codewords + k]; }
};

struct IndexFile {
    std::uint32_t num_books = 0;      // M
    std::uint32_t num_codewords = 0;  // K
    std::uint32_t dim = 0;            // D
    std::uint64_t count = 0;          // N_g
    std::vector<float> codewords;     // [M,K,D/M]
    std::vector<std::uint8_t> codes;  // count * bytes_per_item
    std::vector<std::uint64_t> labels;  // optional, per-item bitmask

    std::size_t sub_bits() const;
    std::size_t bytes_per_item() const { return (num_books * sub_bits() + 7) / 8; }
    const std::uint8_t* code(std::uint64_t n) const { return &codes[n * bytes_per_item()]; }
    std::vector<std::uint32_t> indices_of(std::uint64_t n) const;

    void validate() const;
};

IndexFile build_index(const CodebookSet& cb, const Tensor& gallery);

LookupTable make_lut(const IndexFile& index, const Tensor& query);
LookupTable make_lut(const CodebookSet& cb, const Tensor& query);

struct SearchHit {
    std::uint64_t id;
    float distance;
};

// Ascending distance, ties by ascending id.
std::vector<SearchHit> adc_search(const IndexFile& index, const Tensor& query,
                                  std::size_t top_k);

// Index file "SPQI": magic, u16 version, u32 M, u32 K, u32 D, u64 N_g,
// codebooks as f32 SPQT blob, packed codes, optional label block.
void write_spqi(std::ostream& os, const IndexFile& index);
IndexFile read_spqi(std::istream& is);
void save_index(const std::string& path, const IndexFile& index);
IndexFile load_index(const std::string& path);

// Codebooks restored in f64 (values are exact f32 round-trips).
CodebookSet codebooks_of(const IndexFile& index);

}  // namespace spq
