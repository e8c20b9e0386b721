#include <algorithm>
#include <cmath>
#include <sstream>

#include <doctest.h>

#include "spq/index.hpp"
#include "spq/ops.hpp"

using namespace spq;

namespace {

Tensor random_batch(std::size_t b, std::size_t d, Rng& rng) {
    Tensor t({b, d});
    for (auto& v : t.data) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("pack_code worked example") {
    // M=4, K=16 (4 bits each): [3,15,0,7] -> 0x3F 0x07
    const std::uint32_t idx[4] = {3, 15, 0, 7};
    const auto bytes = pack_code(idx, 4, 4);
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0x3F);
    CHECK(bytes[1] == 0x07);
    const auto back = unpack_code(bytes.data(), 4, 4);
    CHECK(back == std::vector<std::uint32_t>(idx, idx + 4));
}

TEST_CASE("pack_code pads the trailing byte with zeros") {
    // M=3, 3 bits each = 9 bits -> 2 bytes, 7 padding bits
    const std::uint32_t idx[3] = {0b101, 0b011, 0b110};
    const auto bytes = pack_code(idx, 3, 3);
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0b10101111);  // 101 011 11(0...)
    CHECK(bytes[1] == 0b00000000);
    CHECK(unpack_code(bytes.data(), 3, 3) == std::vector<std::uint32_t>{5, 3, 6});
}

TEST_CASE("pack/unpack is a bijection over all codes") {
    // exhaustive over M=2, 4 bits: 256 combinations
    std::vector<std::vector<std::uint8_t>> seen;
    for (std::uint32_t a = 0; a < 16; ++a) {
        for (std::uint32_t b = 0; b < 16; ++b) {
            const std::uint32_t idx[2] = {a, b};
            auto bytes = pack_code(idx, 2, 4);
            CHECK(unpack_code(bytes.data(), 2, 4) == std::vector<std::uint32_t>{a, b});
            seen.push_back(std::move(bytes));
        }
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("build_index stores hard assignments") {
    Rng rng(1, 0);
    const CodebookSet cb = CodebookSet::random_init(4, 16, 3, rng);
    const Tensor gallery = random_batch(25, 12, rng);
    const IndexFile index = build_index(cb, gallery);
    CHECK(index.num_books == 4);
    CHECK(index.num_codewords == 16);
    CHECK(index.dim == 12);
    CHECK(index.count == 25);
    CHECK(index.bytes_per_item() == 2);
    const auto expect = hard_assign(cb, gallery);
    for (std::uint64_t n = 0; n < 25; ++n) {
        const auto got = index.indices_of(n);
        for (std::size_t m = 0; m < 4; ++m) CHECK(got[m] == expect[n * 4 + m]);
    }
}

TEST_CASE("lut entries are f32 squared distances") {
    Rng rng(2, 0);
    const CodebookSet cb = CodebookSet::random_init(3, 8, 4, rng);
    const Tensor q = random_batch(1, 12, rng);
    const Tensor q1({12}, q.data);
    const LookupTable lut = make_lut(cb, q1);
    for (std::size_t m = 0; m < 3; ++m) {
        for (std::size_t k = 0; k < 8; ++k) {
            const double d = squared_euclidean(
                std::span<const double>(&q.data[m * 4], 4),
                std::span<const double>(cb.codeword(m, k), 4));
            CHECK(lut.at(m, k) == doctest::Approx(d).epsilon(1e-6));
        }
    }
}

TEST_CASE("adc distances equal reconstruction distances within f32 error") {
    Rng rng(3, 0);
    const CodebookSet cb = CodebookSet::random_init(4, 16, 4, rng);
    const Tensor gallery = random_batch(40, 16, rng);
    Tensor q({16});
    for (auto& v : q.data) v = rng.normal();
    const IndexFile index = build_index(cb, gallery);
    const auto hits = adc_search(index, q, 40);
    REQUIRE(hits.size() == 40);

    const auto assign = hard_assign(cb, gallery);
    const Tensor recon = reconstruct(cb, assign, 40);
    for (const auto& hit : hits) {
        const double d = squared_euclidean(
            std::span<const double>(q.data),
            std::span<const double>(&recon.data[hit.id * 16], 16));
        CHECK(hit.distance == doctest::Approx(d).epsilon(1e-5));
    }
    // sorted ascending
    for (std::size_t i = 1; i < hits.size(); ++i) {
        CHECK(hits[i].distance >= hits[i - 1].distance);
    }
}

TEST_CASE("adc ties break by ascending id") {
    // two items share a code, so their distances are bit-identical
    CodebookSet cb(1, 2, 2);
    cb.codeword(0, 0)[0] = 0.0;
    cb.codeword(0, 0)[1] = 0.0;
    cb.codeword(0, 1)[0] = 1.0;
    cb.codeword(0, 1)[1] = 1.0;
    Tensor gallery({4, 2}, {0.9, 0.9,   // -> codeword 1
                            0.1, 0.1,   // -> codeword 0
                            0.8, 1.1,   // -> codeword 1
                            0.0, 0.2});  // -> codeword 0
    const IndexFile index = build_index(cb, gallery);
    Tensor q({2}, {1.0, 1.0});
    const auto hits = adc_search(index, q, 4);
    CHECK(hits[0].id == 0);
    CHECK(hits[1].id == 2);
    CHECK(hits[2].id == 1);
    CHECK(hits[3].id == 3);

    // top_k beyond the gallery size violates the precondition
    CHECK_THROWS_AS(adc_search(index, q, 10), std::invalid_argument);
}

TEST_CASE("adc_search input validation") {
    Rng rng(4, 0);
    const CodebookSet cb = CodebookSet::random_init(2, 4, 2, rng);
    const IndexFile index = build_index(cb, random_batch(5, 4, rng));
    CHECK_THROWS_AS(adc_search(index, Tensor({5}), 3), std::invalid_argument);
    CHECK(adc_search(index, Tensor({4}), 0).empty());
}

TEST_CASE("spqi round trip is byte exact") {
    Rng rng(5, 0);
    const CodebookSet cb = CodebookSet::random_init(4, 16, 4, rng);
    IndexFile index = build_index(cb, random_batch(30, 16, rng));
    SUBCASE("without labels") {}
    SUBCASE("with labels") {
        index.labels.resize(30);
        for (std::size_t n = 0; n < 30; ++n) index.labels[n] = 1ull << (n % 10);
    }

    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_spqi(ss, index);
    const std::string first = ss.str();
    const IndexFile back = read_spqi(ss);
    CHECK(back.num_books == index.num_books);
    CHECK(back.num_codewords == index.num_codewords);
    CHECK(back.dim == index.dim);
    CHECK(back.count == index.count);
    CHECK(back.codewords == index.codewords);
    CHECK(back.codes == index.codes);
    CHECK(back.labels == index.labels);

    // writing the reread index reproduces the same bytes
    std::stringstream ss2(std::ios::in | std::ios::out | std::ios::binary);
    write_spqi(ss2, back);
    CHECK(ss2.str() == first);
}

TEST_CASE("spqi header and corruption") {
    Rng rng(6, 0);
    const CodebookSet cb = CodebookSet::random_init(2, 4, 2, rng);
    const IndexFile index = build_index(cb, random_batch(3, 4, rng));
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_spqi(ss, index);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "SPQI");

    std::stringstream bad(std::ios::in | std::ios::out | std::ios::binary);
    bad << "SPQX" << bytes.substr(4);
    CHECK_THROWS_AS(read_spqi(bad), std::runtime_error);

    std::stringstream cut(bytes.substr(0, bytes.size() - 3),
                          std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(read_spqi(cut), std::runtime_error);
}

TEST_CASE("codebooks_of restores exact f32 values") {
    Rng rng(7, 0);
    const CodebookSet cb = CodebookSet::random_init(3, 8, 2, rng);
    const IndexFile index = build_index(cb, random_batch(4, 6, rng));
    const CodebookSet back = codebooks_of(index);
    CHECK(back.num_books == 3);
    CHECK(back.num_codewords == 8);
    CHECK(back.subdim == 2);
    for (std::size_t i = 0; i < cb.codewords.numel(); ++i) {
        CHECK(back.codewords[i] ==
              static_cast<double>(static_cast<float>(cb.codewords[i])));
    }
}
