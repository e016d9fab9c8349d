#pragma once

// Little-endian byte buffers and atomic file replacement shared by the
// binary formats (KEVT, KSNW, KCTW, KCTF) and the CSV writers.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kraken::io {

class ByteWriter {
public:
    void put_u8(std::uint8_t v) { bytes_.push_back(v); }
    void put_u16(std::uint16_t v);
    void put_i16(std::int16_t v) { put_u16(static_cast<std::uint16_t>(v)); }
    void put_u32(std::uint32_t v);
    void put_magic(std::string_view magic);
    void put_bytes(std::span<const std::uint8_t> data);

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked cursor; every short read throws TruncatedRecord.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t get_u8();
    std::uint16_t get_u16();
    std::int16_t get_i16() { return static_cast<std::int16_t>(get_u16()); }
    std::uint32_t get_u32();
    std::span<const std::uint8_t> get_bytes(std::size_t n);
    /// Throws BadMagic on mismatch (or TruncatedRecord if too short).
    void expect_magic(std::string_view magic);

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames over `path`, so readers never
/// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace kraken::io
