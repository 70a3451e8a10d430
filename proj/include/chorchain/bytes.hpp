#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chorchain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

template <std::size_t N>
using FixedBytes = std::array<std::uint8_t, N>;

using Hash256 = FixedBytes<32>;
using Hash160 = FixedBytes<20>;

std::string to_hex(ByteView data);

template <std::size_t N>
std::string to_hex(const FixedBytes<N>& data)
{
    return to_hex(ByteView{data.data(), data.size()});
}

/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

template <std::size_t N>
FixedBytes<N> fixed_from_hex(std::string_view hex)
{
    Bytes raw = from_hex(hex);
    if (raw.size() != N)
        throw std::invalid_argument("expected " + std::to_string(N) + " bytes of hex");
    FixedBytes<N> out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
}

template <std::size_t N>
ByteView view(const FixedBytes<N>& data)
{
    return {data.data(), data.size()};
}

inline ByteView view(const Bytes& data) { return {data.data(), data.size()}; }

inline ByteView view(std::string_view text)
{
    return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

class TruncatedInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Append-only serializer. Big-endian helpers are used for the process data
/// block, little-endian ones for the transaction wire format.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16be(std::uint16_t v);
    void u32be(std::uint32_t v);
    void u64be(std::uint64_t v);
    void u32le(std::uint32_t v);
    void u64le(std::uint64_t v);
    void varint(std::uint64_t v);
    void bytes(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    template <std::size_t N>
    void bytes(const FixedBytes<N>& data) { bytes(view(data)); }
    /// varint length prefix followed by the data
    void var_bytes(ByteView data);

    const Bytes& data() const& { return buf_; }
    Bytes take() && { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

/// Cursor over a byte view. Every read throws TruncatedInput when the view
/// is exhausted.
class ByteReader {
public:
    explicit ByteReader(ByteView data) : data_(data) {}

    std::uint8_t u8();
    std::uint16_t u16be();
    std::uint32_t u32be();
    std::uint64_t u64be();
    std::uint32_t u32le();
    std::uint64_t u64le();
    std::uint64_t varint();
    Bytes bytes(std::size_t n);
    Bytes var_bytes(std::size_t max_len = 1u << 24);

    template <std::size_t N>
    FixedBytes<N> fixed()
    {
        FixedBytes<N> out{};
        need(N);
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), N, out.begin());
        pos_ += N;
        return out;
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    bool empty() const { return remaining() == 0; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const;

    ByteView data_;
    std::size_t pos_ = 0;
};

} // namespace chorchain
