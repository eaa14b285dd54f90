#include "sarlora/telemetry.hpp"

#include <cmath>
#include <limits>

#include "sarlora/bytes.hpp"

namespace sarlora::telemetry {

const char* to_string(DecodeError e) {
  switch (e) {
    case DecodeError::length: return "length";
    case DecodeError::magic: return "magic";
    case DecodeError::version: return "version";
    case DecodeError::crc: return "crc";
    case DecodeError::range: return "range";
  }
  return "unknown";
}

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : data) {
    crc ^= static_cast<std::uint16_t>(b) << 8;
    for (int i = 0; i < 8; ++i)
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
  }
  return crc;
}

namespace {

template <typename Int>
Int quantize_field(double v, double scale, const char* name) {
  const double q = std::round(v * scale);
  if (!std::isfinite(q) || q < static_cast<double>(std::numeric_limits<Int>::min()) ||
      q > static_cast<double>(std::numeric_limits<Int>::max()))
    throw FrameError(DecodeError::range, std::string("frame: ") + name + " out of range");
  return static_cast<Int>(q);
}

void put_be16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

void put_be32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

std::uint16_t get_be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t get_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

}  // namespace

Frame encode(const world::GatewayMessage& msg, std::uint16_t seq) {
  const auto rssi = quantize_field<std::int16_t>(msg.rssi_dbm, 100.0, "rssi");
  const auto snr = quantize_field<std::int16_t>(msg.snr_db, 100.0, "snr");
  const auto x = quantize_field<std::int32_t>(msg.x_m, 1000.0, "x");
  const auto y = quantize_field<std::int32_t>(msg.y_m, 1000.0, "y");
  Frame f{};
  f[0] = kMagic0;
  f[1] = kMagic1;
  f[2] = kVersion;
  put_be16(&f[3], static_cast<std::uint16_t>(rssi));
  put_be16(&f[5], static_cast<std::uint16_t>(snr));
  put_be32(&f[7], static_cast<std::uint32_t>(x));
  put_be32(&f[11], static_cast<std::uint32_t>(y));
  put_be16(&f[15], seq);
  put_be16(&f[17], crc16_ccitt(std::span(f.data(), kFrameSize - 2)));
  return f;
}

Decoded decode(std::span<const std::uint8_t> b) {
  if (b.size() != kFrameSize)
    throw FrameError(DecodeError::length,
                     "frame: expected " + std::to_string(kFrameSize) + " bytes, got " + std::to_string(b.size()));
  if (b[0] != kMagic0 || b[1] != kMagic1) throw FrameError(DecodeError::magic, "frame: bad magic");
  if (get_be16(&b[17]) != crc16_ccitt(b.first(kFrameSize - 2)))
    throw FrameError(DecodeError::crc, "frame: CRC mismatch");
  if (b[2] != kVersion)
    throw FrameError(DecodeError::version, "frame: unsupported version " + std::to_string(b[2]));
  Decoded d;
  d.message.rssi_dbm = static_cast<std::int16_t>(get_be16(&b[3])) / 100.0;
  d.message.snr_db = static_cast<std::int16_t>(get_be16(&b[5])) / 100.0;
  d.message.x_m = static_cast<std::int32_t>(get_be32(&b[7])) / 1000.0;
  d.message.y_m = static_cast<std::int32_t>(get_be32(&b[11])) / 1000.0;
  d.seq = get_be16(&b[15]);
  return d;
}

world::GatewayMessage quantize(const world::GatewayMessage& msg) {
  const Frame f = encode(msg, 0);
  return decode(f).message;
}

std::vector<std::uint8_t> to_frames(std::span<const world::GatewayMessage> msgs, std::uint16_t first_seq) {
  std::vector<std::uint8_t> out;
  out.reserve(msgs.size() * kFrameSize);
  auto seq = first_seq;
  for (const auto& m : msgs) {
    const Frame f = encode(m, seq++);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

std::vector<Decoded> read_frames(std::span<const std::uint8_t> data) {
  if (data.size() % kFrameSize != 0)
    throw FrameError(DecodeError::length, "frames: size " + std::to_string(data.size()) + " is not a multiple of " +
                                              std::to_string(kFrameSize));
  std::vector<Decoded> out;
  out.reserve(data.size() / kFrameSize);
  for (std::size_t off = 0; off < data.size(); off += kFrameSize) {
    try {
      out.push_back(decode(data.subspan(off, kFrameSize)));
    } catch (const FrameError& e) {
      throw FrameError(e.kind(), std::string(e.what()) + " (frame " + std::to_string(off / kFrameSize) + ")");
    }
  }
  return out;
}

std::vector<Decoded> load_frames(const std::filesystem::path& path) { return read_frames(bytes::read_file(path)); }

}  // namespace sarlora::telemetry
