#include "chorchain/bytes.hpp"

#include <algorithm>

namespace chorchain {

std::string to_hex(ByteView data)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace {

int nibble(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

} // namespace

Bytes from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0)
        throw std::invalid_argument("hex string has odd length");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]);
        int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0)
            throw std::invalid_argument("invalid hex character");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

void ByteWriter::u16be(std::uint16_t v)
{
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32be(std::uint32_t v)
{
    for (int shift = 24; shift >= 0; shift -= 8)
        u8(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::u64be(std::uint64_t v)
{
    for (int shift = 56; shift >= 0; shift -= 8)
        u8(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::u32le(std::uint32_t v)
{
    for (int shift = 0; shift < 32; shift += 8)
        u8(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::u64le(std::uint64_t v)
{
    for (int shift = 0; shift < 64; shift += 8)
        u8(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::varint(std::uint64_t v)
{
    if (v < 0xfd) {
        u8(static_cast<std::uint8_t>(v));
    } else if (v <= 0xffff) {
        u8(0xfd);
        u8(static_cast<std::uint8_t>(v));
        u8(static_cast<std::uint8_t>(v >> 8));
    } else if (v <= 0xffffffffu) {
        u8(0xfe);
        u32le(static_cast<std::uint32_t>(v));
    } else {
        u8(0xff);
        u64le(v);
    }
}

void ByteWriter::var_bytes(ByteView data)
{
    varint(data.size());
    bytes(data);
}

void ByteReader::need(std::size_t n) const
{
    if (remaining() < n)
        throw TruncatedInput("truncated input: need " + std::to_string(n) + " bytes, have " +
                             std::to_string(remaining()));
}

std::uint8_t ByteReader::u8()
{
    need(1);
    return data_[pos_++];
}

std::uint16_t ByteReader::u16be()
{
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32be()
{
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64be()
{
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v = (v << 8) | data_[pos_ + i];
    pos_ += 8;
    return v;
}

std::uint32_t ByteReader::u32le()
{
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64le()
{
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | data_[pos_ + i];
    pos_ += 8;
    return v;
}

std::uint64_t ByteReader::varint()
{
    std::uint8_t tag = u8();
    if (tag < 0xfd)
        return tag;
    if (tag == 0xfd) {
        need(2);
        std::uint64_t v = data_[pos_] | (data_[pos_ + 1] << 8);
        pos_ += 2;
        return v;
    }
    if (tag == 0xfe)
        return u32le();
    return u64le();
}

Bytes ByteReader::bytes(std::size_t n)
{
    need(n);
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
              data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
}

Bytes ByteReader::var_bytes(std::size_t max_len)
{
    std::uint64_t n = varint();
    if (n > max_len)
        throw TruncatedInput("length prefix " + std::to_string(n) + " exceeds limit");
    return bytes(static_cast<std::size_t>(n));
}

} // namespace chorchain
