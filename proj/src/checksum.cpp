#include "viewsynth/checksum.hpp"

#include <array>
#include <cstdio>

#include <openssl/evp.h>

#include "viewsynth/errors.hpp"

namespace viewsynth {

std::string sha256_hex(std::span<const unsigned char> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(length * 2);
    char buf[3];
    for (unsigned int i = 0; i < length; ++i) {
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string sha256_hex(std::span<const double> values) {
    return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes()));
}

}  // namespace viewsynth
