#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "imfnd/errors.hpp"

namespace imfnd {

// SHA-256 hex digest; used for cache keys, dataset/support digests and
// parameter checksums.
inline std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int out_len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr ||
        EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, len) != 1 ||
        EVP_DigestFinal_ex(ctx, out, &out_len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string result;
    result.reserve(out_len * 2);
    for (unsigned int i = 0; i < out_len; ++i) {
        result.push_back(hex[out[i] >> 4]);
        result.push_back(hex[out[i] & 0x0f]);
    }
    return result;
}

inline std::string sha256_hex(const std::string& s) {
    return sha256_hex(s.data(), s.size());
}

inline std::string sha256_hex(const std::vector<unsigned char>& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace imfnd
