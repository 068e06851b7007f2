// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers for the ATMD/ATMC/ATMP/ATMT/ATMA file formats.
// Readers report every failure as FormatError with the byte offset.

#pragma once

#include "atm/common.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atm {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
public:
    void magic(std::string_view tag) { raw(tag.data(), tag.size()); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f32s(std::span<const float> v) { raw(v.data(), v.size_bytes()); }

    const std::vector<char>& bytes() const { return buf_; }
    /// Writes to `path` atomically (temp file + rename). Throws IoError.
    void save(const std::filesystem::path& path) const;

private:
    void raw(const void* p, std::size_t n);
    std::vector<char> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : buf_(std::move(bytes)) {}
    /// Throws IoError when the file cannot be read.
    static ByteReader from_file(const std::filesystem::path& path);

    void expect_magic(std::string_view tag);
    void expect_version(std::uint32_t version);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    /// Reads `count` floats; a short file reports expected vs actual length.
    void f32s(std::span<float> out);
    void expect_end() const;

    std::uint64_t offset() const { return pos_; }
    std::uint64_t size() const { return buf_.size(); }

private:
    void need(std::uint64_t n, const char* what) const;
    std::vector<char> buf_;
    std::uint64_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);

}  // namespace atm
