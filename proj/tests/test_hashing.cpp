#include <cstdint>
#include <set>
#include <string>

#include "doctest.h"
#include "support.hpp"
#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"

using namespace ultraif;

// Reference values computed with Python's hashlib.

TEST_CASE("sha256_hex matches known digests") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    std::string with_nul("a\0b", 3);
    CHECK(sha256_hex(with_nul) != sha256_hex("ab"));  // embedded NUL counts
}

TEST_CASE("file_sha256_hex streams the file bytes") {
    testsupport::TempDir dir;
    auto path = dir.file("blob.bin");
    std::string payload = "abc";
    write_text_file_atomic(path, payload);
    CHECK(file_sha256_hex(path) == sha256_hex(payload));

    // large enough to cross any internal buffer boundary
    std::string big(1 << 20, 'x');
    big += "tail";
    write_text_file_atomic(path, big);
    CHECK(file_sha256_hex(path) == sha256_hex(big));

    CHECK_THROWS_AS(file_sha256_hex(dir.file("missing.bin")), IoError);
}

TEST_CASE("stable_hash64 is the digest prefix, big-endian") {
    CHECK(stable_hash64("abc") == 0xba7816bf8f01cfeaULL);
    CHECK(stable_hash64("") == 0xe3b0c44298fc1c14ULL);
}

TEST_CASE("derive_seed matches the frozen reference chain") {
    CHECK(derive_seed(0, "decompose") == 12439412926256525336ULL);
    CHECK(derive_seed(0, "augment") == 7509300965632870102ULL);
    CHECK(derive_seed(7509300965632870102ULL, "inst-001") == 10463445209636399595ULL);
}

TEST_CASE("call_seed matches the frozen reference values and stays non-negative") {
    CHECK(call_seed(10463445209636399595ULL, "respond", 2, 1) == 6558929886865875469LL);
    CHECK(call_seed(12345, "judge", 0, 0) == 8826704600597975554LL);
    for (int i = 0; i < 200; ++i) {
        CHECK(call_seed(static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL, "p", i, i % 3) >= 0);
    }
}

TEST_CASE("seed derivation separates labels, parents, and field boundaries") {
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    // label concatenation must not alias across the separator
    CHECK(derive_seed(1, std::string("ab")) != derive_seed(1, std::string("a\x1f") + "b"));
    CHECK(call_seed(1, "ab", 1, 0) != call_seed(1, "a", 11, 0));
    CHECK(call_seed(1, "p", 1, 12) != call_seed(1, "p", 11, 2));

    std::set<std::uint64_t> seen;
    for (int i = 0; i < 64; ++i) {
        seen.insert(derive_seed(42, "inst-" + std::to_string(i)));
    }
    CHECK(seen.size() == 64);
}
