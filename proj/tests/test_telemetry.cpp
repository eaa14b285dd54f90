#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string_view>

#include "sarlora/telemetry.hpp"

using namespace sarlora;
using namespace sarlora::telemetry;

namespace {

world::GatewayMessage random_message(Rng& rng) {
  return {-150.0 + 150.0 * uniform01(rng), -30.0 + 80.0 * uniform01(rng), -2000.0 + 4000.0 * uniform01(rng),
          -2000.0 + 4000.0 * uniform01(rng)};
}

DecodeError decode_error(std::span<const std::uint8_t> b) {
  try {
    decode(b);
  } catch (const FrameError& e) {
    return e.kind();
  }
  FAIL("decode accepted a corrupted frame");
  return DecodeError::range;
}

}  // namespace

TEST_CASE("CRC-16/CCITT-FALSE check value") {
  constexpr std::string_view check = "123456789";
  const std::vector<std::uint8_t> bytes(check.begin(), check.end());
  CHECK(crc16_ccitt(bytes) == 0x29B1);
  CHECK(crc16_ccitt({}) == 0xFFFF);
}

TEST_CASE("frame layout of the reference message") {
  const Frame f = encode({-100.0, 0.0, 0.0, 0.0}, 0);
  CHECK(f.size() == 19);
  CHECK(f[0] == 0x4C);
  CHECK(f[1] == 0x53);
  CHECK(f[2] == 0x01);
  CHECK(f[3] == 0xD8);
  CHECK(f[4] == 0xF0);
  for (std::size_t i = 5; i < 17; ++i) CHECK(f[i] == 0x00);
  const std::uint16_t crc = crc16_ccitt(std::span(f.data(), 17));
  CHECK(f[17] == (crc >> 8));
  CHECK(f[18] == (crc & 0xFF));
}

TEST_CASE("fields are big endian two's complement") {
  const Frame f = encode({12.34, -0.01, -1.0, 2147483.647}, 0xABCD);
  CHECK(f[3] == 0x04);  // 1234 = 0x04D2
  CHECK(f[4] == 0xD2);
  CHECK(f[5] == 0xFF);  // -1
  CHECK(f[6] == 0xFF);
  CHECK(f[7] == 0xFF);  // -1000 = 0xFFFFFC18
  CHECK(f[10] == 0x18);
  CHECK(f[11] == 0x7F);  // INT32_MAX
  CHECK(f[15] == 0xAB);
  CHECK(f[16] == 0xCD);
}

TEST_CASE("round trip within quantization") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const auto m = random_message(rng);
    const auto seq = static_cast<std::uint16_t>(uniform_index(rng, 65536));
    const auto d = decode(encode(m, seq));
    CHECK(d.seq == seq);
    REQUIRE(std::abs(d.message.rssi_dbm - m.rssi_dbm) <= 0.005 + 1e-12);
    REQUIRE(std::abs(d.message.snr_db - m.snr_db) <= 0.005 + 1e-12);
    REQUIRE(std::abs(d.message.x_m - m.x_m) <= 0.0005 + 1e-12);
    REQUIRE(std::abs(d.message.y_m - m.y_m) <= 0.0005 + 1e-12);
    // A quantized message is a fixed point.
    REQUIRE(quantize(d.message) == d.message);
  }
}

TEST_CASE("every single-bit flip is detected") {
  Rng rng(2);
  std::size_t detected = 0, total = 0, misclassified = 0;
  for (int i = 0; i < 10000; ++i) {
    Frame f = encode(random_message(rng), static_cast<std::uint16_t>(i));
    for (std::size_t bit = 0; bit < 8 * kFrameSize; ++bit) {
      Frame g = f;
      g[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      ++total;
      try {
        decode(g);
      } catch (const FrameError& e) {
        ++detected;
        const bool magic_byte = bit < 16;
        if (e.kind() != (magic_byte ? DecodeError::magic : DecodeError::crc)) ++misclassified;
      }
    }
  }
  CHECK(detected == total);
  CHECK(misclassified == 0);
  CHECK(total == 10000 * 152);
}

TEST_CASE("decode errors name the failing check") {
  const Frame f = encode({-90.0, 10.0, 1.0, 2.0}, 7);
  SUBCASE("length") {
    CHECK(decode_error(std::span(f.data(), 17)) == DecodeError::length);
  }
  SUBCASE("magic") {
    Frame g = f;
    g[0] = 0x00;
    CHECK(decode_error(g) == DecodeError::magic);
  }
  SUBCASE("version with a valid CRC") {
    Frame g = f;
    g[2] = 0x02;
    const auto crc = crc16_ccitt(std::span(g.data(), 17));
    g[17] = static_cast<std::uint8_t>(crc >> 8);
    g[18] = static_cast<std::uint8_t>(crc);
    CHECK(decode_error(g) == DecodeError::version);
    CHECK_THROWS_WITH(decode(g), doctest::Contains("version"));
  }
  SUBCASE("range on encode") {
    CHECK_THROWS_AS(encode({400.0, 0.0, 0.0, 0.0}, 0), FrameError);
    CHECK_THROWS_AS(encode({-90.0, 0.0, 3e6, 0.0}, 0), FrameError);
    CHECK_THROWS_AS(encode({NAN, 0.0, 0.0, 0.0}, 0), FrameError);
    try {
      encode({-90.0, 0.0, 0.0, -3e6}, 0);
    } catch (const FrameError& e) {
      CHECK(e.kind() == DecodeError::range);
      CHECK(std::string(e.what()).find('y') != std::string::npos);
    }
  }
  CHECK(std::string(to_string(DecodeError::crc)) == "crc");
}

TEST_CASE("frames files") {
  Rng rng(3);
  std::vector<world::GatewayMessage> msgs;
  for (int i = 0; i < 50; ++i) msgs.push_back(quantize(random_message(rng)));
  const auto bytes = to_frames(msgs, 65530);
  CHECK(bytes.size() == 50 * kFrameSize);
  const auto back = read_frames(bytes);
  REQUIRE(back.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(back[i].message == msgs[i]);
    CHECK(back[i].seq == static_cast<std::uint16_t>(65530 + i));  // wraps
  }

  auto partial = bytes;
  partial.pop_back();
  CHECK_THROWS_AS(read_frames(partial), FrameError);
  auto corrupt = bytes;
  corrupt[3 * kFrameSize + 5] ^= 0x10;
  CHECK_THROWS_WITH(read_frames(corrupt), doctest::Contains("frame 3"));

  const auto path = std::filesystem::temp_directory_path() / "sarlora_test.frames";
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                              static_cast<std::streamsize>(bytes.size()));
  CHECK(load_frames(path).size() == 50);
  std::filesystem::remove(path);
}
