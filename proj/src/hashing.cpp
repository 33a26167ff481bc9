#include "ultraif/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "ultraif/errors.hpp"

namespace ultraif {

namespace {

std::string to_hex(const unsigned char* digest, std::size_t len) {
    static const char* kHex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0x0f]);
    }
    return out;
}

struct DigestCtx {
    EVP_MD_CTX* ctx;
    DigestCtx() : ctx(EVP_MD_CTX_new()) {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
            throw Error("sha256: failed to initialize digest context");
        }
    }
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
    void update(const void* data, std::size_t len) {
        if (EVP_DigestUpdate(ctx, data, len) != 1) {
            throw Error("sha256: digest update failed");
        }
    }
    std::array<unsigned char, 32> finish() {
        std::array<unsigned char, 32> digest{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx, digest.data(), &len) != 1 || len != 32) {
            throw Error("sha256: digest finalization failed");
        }
        return digest;
    }
};

std::array<unsigned char, 32> sha256_raw(std::string_view bytes) {
    DigestCtx d;
    d.update(bytes.data(), bytes.size());
    return d.finish();
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    auto digest = sha256_raw(bytes);
    return to_hex(digest.data(), digest.size());
}

std::string file_sha256_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for hashing: " + path.string());
    }
    DigestCtx d;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) d.update(buf, static_cast<std::size_t>(got));
    }
    if (in.bad()) {
        throw IoError("read error while hashing: " + path.string());
    }
    auto digest = d.finish();
    return to_hex(digest.data(), digest.size());
}

std::uint64_t stable_hash64(std::string_view bytes) {
    auto digest = sha256_raw(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | digest[static_cast<std::size_t>(i)];
    return v;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
    char buf[16 + 1];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(parent));
    std::string material(buf, 16);
    material.push_back('\x1f');
    material.append(label);
    return stable_hash64(material);
}

std::int64_t call_seed(std::uint64_t record_seed, std::string_view purpose, int index, int attempt) {
    std::string label(purpose);
    label.push_back('\x1f');
    label += std::to_string(index);
    label.push_back('\x1f');
    label += std::to_string(attempt);
    std::uint64_t v = derive_seed(record_seed, label);
    return static_cast<std::int64_t>(v & 0x7fffffffffffffffULL);
}

}  // namespace ultraif
