#include "kraken/io.hpp"

#include "kraken/error.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

namespace kraken::io {

void ByteWriter::put_u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v & 0xFFu));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::put_u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        bytes_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFFu));
    }
}

void ByteWriter::put_magic(std::string_view magic) {
    for (char ch : magic) bytes_.push_back(static_cast<std::uint8_t>(ch));
}

void ByteWriter::put_bytes(std::span<const std::uint8_t> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteReader::need(std::size_t n) const {
    if (remaining() < n) {
        throw Error(ErrorCode::TruncatedRecord,
                    "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                        ", have " + std::to_string(remaining()));
    }
}

std::uint8_t ByteReader::get_u8() {
    need(1);
    return data_[pos_++];
}

std::uint16_t ByteReader::get_u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

void ByteReader::expect_magic(std::string_view magic) {
    auto got = get_bytes(magic.size());
    for (std::size_t i = 0; i < magic.size(); ++i) {
        if (got[i] != static_cast<std::uint8_t>(magic[i])) {
            throw Error(ErrorCode::BadMagic, "expected magic '" + std::string(magic) + "'");
        }
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

void write_raw_atomic(const std::filesystem::path& path, const char* data, std::size_t size) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + tmp.string());
        out.write(data, static_cast<std::streamsize>(size));
        out.flush();
        if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot rename onto " + path.string());
    }
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    write_raw_atomic(path, reinterpret_cast<const char*>(data.data()), data.size());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_raw_atomic(path, text.data(), text.size());
}

}  // namespace kraken::io
