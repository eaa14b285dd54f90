#include "sarlora/radio.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sarlora::radio {

namespace {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double lattice_normal(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  const auto key = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(j));
  const double u1 = bits_to_unit_open(splitmix64(key));
  const double u2 = bits_to_unit_open(splitmix64(key ^ 0xD1B54A32D192ED03ULL)) - 0x1.0p-53;
  return box_muller(u1, u2);
}

}  // namespace

void RadioGeometry::validate() const {
  if (!(ref_distance_m > 0.0)) throw std::invalid_argument("radio: ref_distance_m must be > 0");
  if (!(path_loss_exponent >= 2.0)) throw std::invalid_argument("radio: path_loss_exponent must be >= 2");
  if (!(shadow_sigma_db >= 0.0)) throw std::invalid_argument("radio: shadow_sigma_db must be >= 0");
  if (shadow_sigma_db > 0.0 && !(shadow_decorrelation_m > 0.0))
    throw std::invalid_argument("radio: shadow_decorrelation_m must be > 0");
  for (double v : {tx_power_dbm, gain_tx_db, gain_rx_db, ref_loss_db, rician_k_db, noise_floor_dbm}) {
    if (!std::isfinite(v)) throw std::invalid_argument("radio: power and gain fields must be finite");
  }
}

double far_field_power(double distance_m, const RadioGeometry& g) {
  if (!(distance_m > 0.0) || distance_m < g.ref_distance_m) {
    throw std::domain_error("far_field_power: distance " + std::to_string(distance_m) +
                            " m is inside the reference distance");
  }
  return g.tx_power_dbm + g.gain_tx_db + g.gain_rx_db - g.ref_loss_db -
         10.0 * g.path_loss_exponent * std::log10(distance_m / g.ref_distance_m);
}

double far_field_distance(double power_dbm, const RadioGeometry& g) {
  const double at_ref = g.tx_power_dbm + g.gain_tx_db + g.gain_rx_db - g.ref_loss_db;
  return g.ref_distance_m * std::pow(10.0, (at_ref - power_dbm) / (10.0 * g.path_loss_exponent));
}

double shadowing_at(Point2 pos, const RadioGeometry& g, double extent_m) {
  if (g.shadow_sigma_db == 0.0) return 0.0;
  const double spacing = g.shadow_decorrelation_m;
  const double x = std::clamp(pos.x, -extent_m, extent_m) + extent_m;
  const double y = std::clamp(pos.y, -extent_m, extent_m) + extent_m;
  const double fx = x / spacing;
  const double fy = y / spacing;
  const auto i = static_cast<std::int64_t>(std::floor(fx));
  const auto j = static_cast<std::int64_t>(std::floor(fy));
  const double tx = fx - static_cast<double>(i);
  const double ty = fy - static_cast<double>(j);
  // Exact lattice hits skip interpolation so lattice values are returned verbatim.
  double v;
  if (tx == 0.0 && ty == 0.0) {
    v = lattice_normal(g.seed, i, j);
  } else {
    const double v00 = lattice_normal(g.seed, i, j);
    const double v10 = lattice_normal(g.seed, i + 1, j);
    const double v01 = lattice_normal(g.seed, i, j + 1);
    const double v11 = lattice_normal(g.seed, i + 1, j + 1);
    v = (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v10 + (1.0 - tx) * ty * v01 + tx * ty * v11;
  }
  return g.shadow_sigma_db * v;
}

double fading_sample(const RadioGeometry& g, Rng& rng) {
  if (g.rician_k_db >= kRicianKCapDb) return 0.0;
  const double k = db_to_linear(g.rician_k_db);
  const double los = std::sqrt(k / (k + 1.0));
  const double scatter = std::sqrt(1.0 / (2.0 * (k + 1.0)));
  const double re = los + scatter * standard_normal(rng);
  const double im = scatter * standard_normal(rng);
  return 10.0 * std::log10(re * re + im * im);
}

double received_power(Point3 uav, Point2 node, const RadioGeometry& g, double extent_m, Rng& rng) {
  const double dx = uav.x - node.x;
  const double dy = uav.y - node.y;
  const double d = std::sqrt(dx * dx + dy * dy + uav.z * uav.z);
  const double mean = far_field_power(d, g);
  const Point2 mid{0.5 * (uav.x + node.x), 0.5 * (uav.y + node.y)};
  return mean + shadowing_at(mid, g, extent_m) + fading_sample(g, rng);
}

LinkSample to_rssi_snr(double signal_power_dbm, const RadioGeometry& g) {
  LinkSample s;
  s.signal_power_dbm = signal_power_dbm;
  s.snr_db = signal_power_dbm - g.noise_floor_dbm;
  s.rssi_dbm = signal_power_dbm + 10.0 * std::log10(1.0 + std::pow(10.0, -s.snr_db / 10.0));
  return s;
}

double recover_signal_power(double rssi_dbm, double snr_db) {
  return rssi_dbm - 10.0 * std::log10(1.0 + std::pow(10.0, -snr_db / 10.0));
}

double view_circle_radius(double rssi_dbm, double snr_db, double altitude_m, const RadioGeometry& g) {
  const double d_hat = far_field_distance(recover_signal_power(rssi_dbm, snr_db), g);
  if (d_hat <= altitude_m) return 0.0;
  return std::sqrt(std::max(d_hat * d_hat - altitude_m * altitude_m, 0.0));
}

}  // namespace sarlora::radio
