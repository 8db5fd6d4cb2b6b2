#pragma once

#include <bit>
#include <type_traits>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcb/error.hpp"

namespace pcb {

namespace detail {

template <typename T>
struct raw_word {
    using type = std::make_unsigned_t<T>;
};

template <>
struct raw_word<float> {
    using type = std::uint32_t;
};

}  // namespace detail

/// Little-endian byte sink.
class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    void magic(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }

    template <typename T>
    void put(T value) {
        static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
        using U = typename detail::raw_word<T>::type;
        const U raw = std::bit_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(raw >> (8 * i)));
    }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source over a borrowed buffer; throws IoError on underrun.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    bool magic(std::string_view tag) {
        auto s = bytes(tag.size());
        return std::memcmp(s.data(), tag.data(), tag.size()) == 0;
    }

    template <typename T>
    T get() {
        using U = typename detail::raw_word<T>::type;
        auto s = bytes(sizeof(U));
        U raw = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) raw |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
        return std::bit_cast<T>(raw);
    }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw IoError("unexpected end of data");
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace pcb
