#include "spq/index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "spq/tensor_io.hpp"

namespace spq {

namespace {

std::size_t log2_of(std::size_t k) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < k) ++bits;
    if ((std::size_t{1} << bits) != k) {
        throw std::invalid_argument("index: K must be a power of two");
    }
    return bits;
}

[[noreturn]] void corrupt(const std::string& msg) { throw std::runtime_error("SPQI: " + msg); }

}  // namespace

std::vector<std::uint8_t> pack_code(const std::uint32_t* indices, std::size_t m,
                                    std::size_t bits) {
    const std::size_t total_bits = m * bits;
    std::vector<std::uint8_t> out((total_bits + 7) / 8, 0);
    std::size_t bitpos = 0;  // counted from the MSB of byte 0
    for (std::size_t i = 0; i < m; ++i) {
        const std::uint32_t v = indices[i];
        if (bits < 32 && v >= (std::uint32_t{1} << bits)) {
            throw std::invalid_argument("pack_code: index does not fit sub-code width");
        }
        for (std::size_t b = 0; b < bits; ++b, ++bitpos) {
            const std::uint32_t bit = (v >> (bits - 1 - b)) & 1u;
            if (bit) out[bitpos / 8] |= static_cast<std::uint8_t>(0x80u >> (bitpos % 8));
        }
    }
    return out;
}

std::vector<std::uint32_t> unpack_code(const std::uint8_t* bytes, std::size_t m,
                                       std::size_t bits) {
    std::vector<std::uint32_t> out(m, 0);
    std::size_t bitpos = 0;
    for (std::size_t i = 0; i < m; ++i) {
        std::uint32_t v = 0;
        for (std::size_t b = 0; b < bits; ++b, ++bitpos) {
            const std::uint32_t bit = (bytes[bitpos / 8] >> (7 - bitpos % 8)) & 1u;
            v = (v << 1) | bit;
        }
        out[i] = v;
    }
    return out;
}

std::size_t IndexFile::sub_bits() const { return log2_of(num_codewords); }

std::vector<std::uint32_t> IndexFile::indices_of(std::uint64_t n) const {
    return unpack_code(code(n), num_books, sub_bits());
}

void IndexFile::validate() const {
    if (num_books == 0 || num_codewords == 0 || dim == 0 || dim % num_books != 0) {
        throw std::runtime_error("IndexFile: inconsistent header");
    }
    log2_of(num_codewords);
    const std::size_t subdim = dim / num_books;
    if (codewords.size() != static_cast<std::size_t>(num_books) * num_codewords * subdim) {
        throw std::runtime_error("IndexFile: codebook size mismatch");
    }
    if (codes.size() != count * bytes_per_item()) {
        throw std::runtime_error("IndexFile: code payload size mismatch");
    }
    if (!labels.empty() && labels.size() != count) {
        throw std::runtime_error("IndexFile: label count mismatch");
    }
}

IndexFile build_index(const CodebookSet& cb, const Tensor& gallery) {
    cb.validate();
    if (gallery.rank() != 2 || gallery.shape[1] != cb.dim()) {
        throw std::invalid_argument("build_index: gallery dim mismatch");
    }
    IndexFile idx;
    idx.num_books = static_cast<std::uint32_t>(cb.num_books);
    idx.num_codewords = static_cast<std::uint32_t>(cb.num_codewords);
    idx.dim = static_cast<std::uint32_t>(cb.dim());
    idx.count = gallery.shape[0];
    idx.codewords.resize(cb.codewords.numel());
    for (std::size_t i = 0; i < idx.codewords.size(); ++i) {
        idx.codewords[i] = static_cast<float>(cb.codewords.data[i]);
    }
    const auto indices = hard_assign(cb, gallery);
    const std::size_t bits = idx.sub_bits();
    idx.codes.reserve(idx.count * idx.bytes_per_item());
    for (std::uint64_t n = 0; n < idx.count; ++n) {
        const auto item = pack_code(&indices[n * cb.num_books], cb.num_books, bits);
        idx.codes.insert(idx.codes.end(), item.begin(), item.end());
    }
    return idx;
}

LookupTable make_lut(const IndexFile& index, const Tensor& query) {
    if (query.rank() != 1 || query.shape[0] != index.dim) {
        throw std::invalid_argument("make_lut: query dim mismatch");
    }
    const std::size_t M = index.num_books, K = index.num_codewords;
    const std::size_t S = index.dim / M;
    LookupTable lut;
    lut.num_books = M;
    lut.num_codewords = K;
    lut.dists.resize(M * K);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t k = 0; k < K; ++k) {
            const float* c = &index.codewords[(m * K + k) * S];
            float acc = 0.0f;
            for (std::size_t d = 0; d < S; ++d) {
                const float diff = static_cast<float>(query.data[m * S + d]) - c[d];
                acc += diff * diff;
            }
            lut.dists[m * K + k] = acc;
        }
    }
    return lut;
}

LookupTable make_lut(const CodebookSet& cb, const Tensor& query) {
    IndexFile tmp;
    tmp.num_books = static_cast<std::uint32_t>(cb.num_books);
    tmp.num_codewords = static_cast<std::uint32_t>(cb.num_codewords);
    tmp.dim = static_cast<std::uint32_t>(cb.dim());
    tmp.codewords.resize(cb.codewords.numel());
    for (std::size_t i = 0; i < tmp.codewords.size(); ++i) {
        tmp.codewords[i] = static_cast<float>(cb.codewords.data[i]);
    }
    return make_lut(tmp, query);
}

std::vector<SearchHit> adc_search(const IndexFile& index, const Tensor& query,
                                  std::size_t top_k) {
    index.validate();
    if (index.count == 0) throw std::logic_error("adc_search: empty index");
    if (top_k > index.count) throw std::invalid_argument("adc_search: top_k > N_g");
    const LookupTable lut = make_lut(index, query);
    const std::size_t M = index.num_books;
    const std::size_t bits = index.sub_bits();

    std::vector<SearchHit> hits(index.count);
    for (std::uint64_t n = 0; n < index.count; ++n) {
        const auto sub = unpack_code(index.code(n), M, bits);
        float acc = 0.0f;
        for (std::size_t m = 0; m < M; ++m) acc += lut.at(m, sub[m]);
        hits[n] = SearchHit{n, acc};
    }
    const auto cmp = [](const SearchHit& a, const SearchHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.id < b.id;
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<long>(top_k), hits.end(), cmp);
    hits.resize(top_k);
    return hits;
}

void write_spqi(std::ostream& os, const IndexFile& index) {
    index.validate();
    os.write("SPQI", 4);
    put_u16le(os, 1);
    put_u32le(os, index.num_books);
    put_u32le(os, index.num_codewords);
    put_u32le(os, index.dim);
    put_u64le(os, index.count);
    // codebooks as an embedded f32 SPQT blob
    Tensor cbt({index.num_books, index.num_codewords, index.dim / index.num_books});
    for (std::size_t i = 0; i < index.codewords.size(); ++i) cbt.data[i] = index.codewords[i];
    write_spqt(os, cbt, Dtype::f32);
    os.write(reinterpret_cast<const char*>(index.codes.data()),
             static_cast<std::streamsize>(index.codes.size()));
    if (index.labels.empty()) {
        put_u32le(os, 0);
    } else {
        put_u32le(os, static_cast<std::uint32_t>(index.labels.size()));
        for (std::uint64_t l : index.labels) put_u64le(os, l);
    }
}

IndexFile read_spqi(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "SPQI", 4) != 0) corrupt("bad magic");
    if (get_u16le(is) != 1) corrupt("unsupported version");
    IndexFile idx;
    idx.num_books = get_u32le(is);
    idx.num_codewords = get_u32le(is);
    idx.dim = get_u32le(is);
    idx.count = get_u64le(is);
    Dtype dt;
    Tensor cbt = read_spqt(is, &dt);
    if (dt != Dtype::f32) corrupt("codebooks must be f32");
    idx.codewords.resize(cbt.numel());
    for (std::size_t i = 0; i < cbt.numel(); ++i) {
        idx.codewords[i] = static_cast<float>(cbt.data[i]);
    }
    idx.codes.resize(idx.count * idx.bytes_per_item());
    is.read(reinterpret_cast<char*>(idx.codes.data()),
            static_cast<std::streamsize>(idx.codes.size()));
    if (static_cast<std::size_t>(is.gcount()) != idx.codes.size()) corrupt("truncated codes");
    const std::uint32_t label_count = get_u32le(is);
    if (label_count != 0) {
        if (label_count != idx.count) corrupt("label count != item count");
        idx.labels.resize(label_count);
        for (auto& l : idx.labels) l = get_u64le(is);
    }
    idx.validate();
    return idx;
}

void save_index(const std::string& path, const IndexFile& index) {
    std::ofstream os(path, std::ios::binary);
    if (!os) corrupt("cannot open " + path + " for writing");
    write_spqi(os, index);
    if (!os) corrupt("write failed: " + path);
}

IndexFile load_index(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) corrupt("cannot open " + path);
    return read_spqi(is);
}

CodebookSet codebooks_of(const IndexFile& index) {
    CodebookSet cb(index.num_books, index.num_codewords, index.dim / index.num_books);
    for (std::size_t i = 0; i < index.codewords.size(); ++i) {
        cb.codewords.data[i] = index.codewords[i];
    }
    return cb;
}

}  // namespace spq
