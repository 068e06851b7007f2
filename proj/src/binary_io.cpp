// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/binary_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace atm {

void ByteWriter::raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
}

void ByteWriter::save(const std::filesystem::path& path) const {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
    return ByteReader(read_file_bytes(path));
}

void ByteReader::need(std::uint64_t n, const char* what) const {
    if (pos_ + n > buf_.size()) {
        throw FormatError(pos_, std::string("truncated while reading ") + what + ": expected " +
                                    std::to_string(n) + " bytes, " +
                                    std::to_string(buf_.size() - pos_) + " available");
    }
}

void ByteReader::expect_magic(std::string_view tag) {
    need(tag.size(), "magic");
    if (std::memcmp(buf_.data() + pos_, tag.data(), tag.size()) != 0) {
        throw FormatError(pos_, "bad magic, expected \"" + std::string(tag) + "\"");
    }
    pos_ += tag.size();
}

void ByteReader::expect_version(std::uint32_t version) {
    const auto at = pos_;
    const auto v = u32();
    if (v != version) {
        throw FormatError(at, "unsupported version " + std::to_string(v) + ", expected " +
                                  std::to_string(version));
    }
}

std::uint8_t ByteReader::u8() {
    need(1, "u8");
    std::uint8_t v;
    std::memcpy(&v, buf_.data() + pos_, 1);
    pos_ += 1;
    return v;
}

std::uint32_t ByteReader::u32() {
    need(4, "u32");
    std::uint32_t v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8, "u64");
    std::uint64_t v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

float ByteReader::f32() {
    need(4, "f32");
    float v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

double ByteReader::f64() {
    need(8, "f64");
    double v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

void ByteReader::f32s(std::span<float> out) {
    need(out.size_bytes(), "float payload");
    std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
}

void ByteReader::expect_end() const {
    if (pos_ != buf_.size()) {
        throw FormatError(pos_, std::to_string(buf_.size() - pos_) + " trailing bytes");
    }
}

}  // namespace atm
