#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sarlora/world.hpp"

namespace sarlora::telemetry {

// Frame layout, big endian, 19 bytes:
//   0-1  magic 4C 53
//   2    version 01
//   3-4  rssi, centi-dBm, i16
//   5-6  snr, centi-dB, i16
//   7-10 x, mm, i32
//   11-14 y, mm, i32
//   15-16 seq, u16
//   17-18 CRC-CCITT over bytes 0..16
inline constexpr std::size_t kFrameSize = 19;
inline constexpr std::uint8_t kMagic0 = 0x4C;
inline constexpr std::uint8_t kMagic1 = 0x53;
inline constexpr std::uint8_t kVersion = 0x01;

using Frame = std::array<std::uint8_t, kFrameSize>;

enum class DecodeError { length, magic, version, crc, range };

const char* to_string(DecodeError e);

class FrameError : public std::runtime_error {
 public:
  FrameError(DecodeError kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DecodeError kind() const { return kind_; }

 private:
  DecodeError kind_;
};

struct Decoded {
  world::GatewayMessage message;
  std::uint16_t seq = 0;
};

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data);

// Throws FrameError(range) when a field does not fit its quantized width.
Frame encode(const world::GatewayMessage& msg, std::uint16_t seq);
Decoded decode(std::span<const std::uint8_t> bytes);

// Value after one encode/decode pass.
world::GatewayMessage quantize(const world::GatewayMessage& msg);

// A .frames file is a plain concatenation of frames.
std::vector<std::uint8_t> to_frames(std::span<const world::GatewayMessage> msgs, std::uint16_t first_seq = 0);
std::vector<Decoded> read_frames(std::span<const std::uint8_t> data);
std::vector<Decoded> load_frames(const std::filesystem::path& path);

}  // namespace sarlora::telemetry
