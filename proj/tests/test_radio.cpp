#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "sarlora/radio.hpp"

using namespace sarlora;
using namespace sarlora::radio;

namespace {

RadioGeometry noiseless() {
  RadioGeometry g;
  g.shadow_sigma_db = 0.0;
  g.rician_k_db = kRicianKCapDb;
  return g;
}

// Power sum of two dBm levels, written independently of the library.
double power_sum_dbm(double a, double b) { return 10.0 * std::log10(std::pow(10.0, a / 10.0) + std::pow(10.0, b / 10.0)); }

}  // namespace

TEST_CASE("far-field power at the reference distance") {
  RadioGeometry g;
  CHECK(far_field_power(1.0, g) == doctest::Approx(-23.0).epsilon(1e-15));
}

TEST_CASE("far-field power drops 10n dB per decade") {
  RadioGeometry g;
  g.path_loss_exponent = 2.7;
  CHECK(far_field_power(10.0, g) == doctest::Approx(far_field_power(1.0, g) - 27.0).epsilon(1e-14));
}

TEST_CASE("far-field power rejects distances inside the reference distance") {
  RadioGeometry g;
  g.ref_distance_m = 2.0;
  CHECK_THROWS_AS(far_field_power(1.0, g), std::domain_error);
  CHECK_THROWS_AS(far_field_power(0.0, g), std::domain_error);
  CHECK_THROWS_AS(far_field_power(-5.0, g), std::domain_error);
}

TEST_CASE("far-field power strictly decreases for random geometries") {
  Rng rng(7);
  for (int k = 0; k < 2000; ++k) {
    RadioGeometry g;
    g.path_loss_exponent = 2.0 + 3.0 * uniform01(rng);
    g.ref_distance_m = 0.5 + 2.0 * uniform01(rng);
    g.tx_power_dbm = -10.0 + 40.0 * uniform01(rng);
    const double d1 = g.ref_distance_m * (1.0 + 1e4 * uniform01(rng));
    const double d2 = d1 * (1.0 + 1e-6 + uniform01(rng));
    CHECK(far_field_power(d2, g) < far_field_power(d1, g));
  }
}

TEST_CASE("far-field distance inverts the power law") {
  RadioGeometry g;
  for (double d : {1.0, 17.0, 300.0, 1234.5, 5000.0}) CHECK(far_field_distance(far_field_power(d, g), g) == doctest::Approx(d).epsilon(1e-12));
}

TEST_CASE("geometry validation names the constraint") {
  RadioGeometry g;
  g.path_loss_exponent = 1.5;
  CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("path_loss_exponent"), std::invalid_argument);
  g = {};
  g.ref_distance_m = 0.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = {};
  g.shadow_sigma_db = -1.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = {};
  g.noise_floor_dbm = NAN;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  CHECK_NOTHROW(RadioGeometry{}.validate());
}

TEST_CASE("shadowing field") {
  RadioGeometry g;
  g.shadow_sigma_db = 4.0;
  g.seed = 99;

  SUBCASE("zero sigma is zero everywhere") {
    RadioGeometry flat = g;
    flat.shadow_sigma_db = 0.0;
    for (double x = -2000; x <= 2000; x += 137) CHECK(shadowing_at({x, -x / 3.0}, flat, 2000.0) == 0.0);
  }
  SUBCASE("repeatable per seed and position") {
    CHECK(shadowing_at({123.4, -56.7}, g, 2000.0) == shadowing_at({123.4, -56.7}, g, 2000.0));
    RadioGeometry other = g;
    other.seed = 100;
    CHECK(shadowing_at({123.4, -56.7}, g, 2000.0) != shadowing_at({123.4, -56.7}, other, 2000.0));
  }
  SUBCASE("continuous between lattice points") {
    const double a = shadowing_at({10.0, 10.0}, g, 2000.0);
    const double b = shadowing_at({10.001, 10.0}, g, 2000.0);
    CHECK(std::abs(a - b) < 1e-3);
  }
  SUBCASE("clamped outside the extent") {
    CHECK(shadowing_at({5000.0, 0.0}, g, 2000.0) == shadowing_at({2000.0, 0.0}, g, 2000.0));
  }
  SUBCASE("lattice values have the configured spread") {
    double l2 = 0.0;
    int n = 0;
    for (int i = 0; i <= 16; ++i)
      for (int j = 0; j <= 16; ++j) {
        const double v = shadowing_at({-2000.0 + 250.0 * i, -2000.0 + 250.0 * j}, g, 2000.0);
        l2 += v * v;
        ++n;
      }
    CHECK(std::sqrt(l2 / n) == doctest::Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("fading is zero at the line-of-sight cap") {
  RadioGeometry g;
  g.rician_k_db = kRicianKCapDb;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(fading_sample(g, rng) == 0.0);
  g.rician_k_db = 80.0;
  CHECK(fading_sample(g, rng) == 0.0);
}

TEST_CASE("fading has unit mean linear power for several K-factors") {
  for (double k_db : {0.0, 3.0, 6.0, 10.0}) {
    RadioGeometry g;
    g.rician_k_db = k_db;
    Rng rng(static_cast<std::uint64_t>(k_db * 10 + 3));
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::pow(10.0, fading_sample(g, rng) / 10.0);
    // Standard error of the mean is at most 1/sqrt(n) for unit-variance
    // Rayleigh power; 5 sigma margin.
    CHECK(s / n == doctest::Approx(1.0).epsilon(5.0 / std::sqrt(n)));
  }
}

TEST_CASE("received power") {
  SUBCASE("noiseless channel is the far-field law") {
    const auto g = noiseless();
    Rng rng(3);
    const Point3 uav{400.0, 0.0, 300.0};
    CHECK(received_power(uav, {0, 0}, g, 2000.0, rng) == far_field_power(500.0, g));
  }
  SUBCASE("directly overhead uses the altitude") {
    const auto g = noiseless();
    Rng rng(3);
    CHECK(received_power({25.0, -40.0, 300.0}, {25.0, -40.0}, g, 2000.0, rng) == far_field_power(300.0, g));
  }
  SUBCASE("noiseless power depends on distance only") {
    const auto g = noiseless();
    Rng rng(3);
    const double a = received_power({300.0, 400.0, 300.0}, {0, 0}, g, 2000.0, rng);
    const double b = received_power({-500.0, 0.0, 300.0}, {0, 0}, g, 2000.0, rng);
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
  }
  SUBCASE("sample mean in linear power matches the mean law") {
    RadioGeometry g;
    g.shadow_sigma_db = 0.0;
    Rng rng(11);
    const int n = 10000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::pow(10.0, received_power({600.0, 0.0, 300.0}, {0, 0}, g, 2000.0, rng) / 10.0);
    CHECK(std::abs(10.0 * std::log10(s / n) - far_field_power(std::hypot(600.0, 300.0), g)) < 0.5);
  }
}

TEST_CASE("RSSI is the power sum of signal and noise") {
  RadioGeometry g;
  SUBCASE("signal at the noise floor") {
    const auto s = to_rssi_snr(g.noise_floor_dbm, g);
    CHECK(s.snr_db == 0.0);
    CHECK(s.rssi_dbm == doctest::Approx(g.noise_floor_dbm + 3.0102999566).epsilon(1e-12));
  }
  SUBCASE("30 dB above the floor") {
    const auto s = to_rssi_snr(g.noise_floor_dbm + 30.0, g);
    CHECK(s.rssi_dbm - s.signal_power_dbm == doctest::Approx(0.0043407748).epsilon(1e-8));
  }
  SUBCASE("independent power sum") {
    for (double p : {-130.0, -118.5, -90.0, -40.0}) CHECK(to_rssi_snr(p, g).rssi_dbm == doctest::Approx(power_sum_dbm(p, g.noise_floor_dbm)).epsilon(1e-13));
  }
}

TEST_CASE("signal recovery from RSSI and SNR") {
  CHECK(recover_signal_power(-100.0, 0.0) == doctest::Approx(-103.0103).epsilon(1e-7));
  CHECK(recover_signal_power(-90.0, 10.0) == doctest::Approx(-90.4139).epsilon(1e-6));
  CHECK(recover_signal_power(-70.0, 60.0) == doctest::Approx(-70.0 - 4.34e-6).epsilon(1e-9));
}

TEST_CASE("round trip through RSSI and SNR is exact") {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    RadioGeometry g;
    g.noise_floor_dbm = -130.0 + 30.0 * uniform01(rng);
    const double p = -150.0 + 130.0 * uniform01(rng);
    const auto s = to_rssi_snr(p, g);
    worst = std::max(worst, std::abs(recover_signal_power(s.rssi_dbm, s.snr_db) - p));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("view circle radius") {
  const auto g = noiseless();
  Rng rng(5);
  SUBCASE("noiseless report recovers the horizontal offset") {
    const auto s = to_rssi_snr(received_power({400.0, 0.0, 300.0}, {0, 0}, g, 2000.0, rng), g);
    CHECK(view_circle_radius(s.rssi_dbm, s.snr_db, 300.0, g) == doctest::Approx(400.0).epsilon(1e-9));
  }
  SUBCASE("overhead is zero") {
    const auto s = to_rssi_snr(far_field_power(300.0, g), g);
    CHECK(view_circle_radius(s.rssi_dbm, s.snr_db, 300.0, g) == doctest::Approx(0.0).scale(1.0).epsilon(1e-4));
    const auto strong = to_rssi_snr(far_field_power(200.0, g), g);
    CHECK(view_circle_radius(strong.rssi_dbm, strong.snr_db, 300.0, g) == 0.0);
  }
}
