// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/content_hash.hpp"

#include "atm/binary_io.hpp"

#include <openssl/evp.h>

#include <memory>

#include <array>
#include <cstdio>

namespace atm {

std::string git_blob_hash(std::string_view bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw Error("SHA-1 computation failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        const unsigned char b = digest[i];
        char buf[3];
        std::snprintf(buf, sizeof buf, "%02x", b);
        hex += buf;
    }
    return hex;
}

std::string hash_files(const std::vector<std::filesystem::path>& paths) {
    std::string joined;
    for (const auto& p : paths) {
        const auto bytes = read_file_bytes(p);
        joined += git_blob_hash({bytes.data(), bytes.size()});
        joined += '\n';
    }
    return git_blob_hash(joined);
}

}  // namespace atm
