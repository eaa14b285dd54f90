#pragma once

#include <cstdint>

#include "sarlora/geometry.hpp"
#include "sarlora/random.hpp"

namespace sarlora::radio {

// Stochastic channel parameters of one search area. Power quantities in dBm,
// gains and losses in dB, lengths in meters.
struct RadioGeometry {
  double tx_power_dbm = 17.0;
  double gain_tx_db = 0.0;
  double gain_rx_db = 0.0;
  double ref_loss_db = 40.0;
  double ref_distance_m = 1.0;
  double path_loss_exponent = 2.7;
  double shadow_sigma_db = 1.0;
  double shadow_decorrelation_m = 250.0;
  double rician_k_db = 10.0;
  double noise_floor_dbm = -120.0;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

// K-factors at or above this are treated as a pure line-of-sight channel.
inline constexpr double kRicianKCapDb = 60.0;

struct LinkSample {
  double signal_power_dbm = 0.0;
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
};

/// Mean received power from the log-distance law. Requires d >= d0.
double far_field_power(double distance_m, const RadioGeometry& g);

/// Inverse of far_field_power, defined for every power value.
double far_field_distance(double power_dbm, const RadioGeometry& g);

/// Seed-fixed spatially correlated shadowing field value at a ground point.
/// The field is a lattice of i.i.d. N(0, sigma^2) values at decorrelation
/// spacing, bilinearly interpolated. Positions outside [-extent, extent]^2 are
/// clamped onto the lattice extent.
double shadowing_at(Point2 pos, const RadioGeometry& g, double extent_m);

/// 10 log10 of a unit-mean Rician power sample with the geometry's K-factor.
double fading_sample(const RadioGeometry& g, Rng& rng);

/// One slot of received signal power over the ground-to-UAV link. Shadowing is
/// evaluated at the midpoint between the node and the UAV ground projection.
double received_power(Point3 uav, Point2 node, const RadioGeometry& g, double extent_m, Rng& rng);

/// Splits a signal power into the (RSSI, SNR) pair reported by the receiver.
LinkSample to_rssi_snr(double signal_power_dbm, const RadioGeometry& g);

/// Signal power de-embedded from RSSI (signal plus noise) and SNR.
double recover_signal_power(double rssi_dbm, double snr_db);

/// Horizontal radius of the view circle implied by one report. Diagnostic
/// only, assumes the far-field mean law. Returns 0 when the implied distance
/// is at or below the altitude.
double view_circle_radius(double rssi_dbm, double snr_db, double altitude_m, const RadioGeometry& g);

}  // namespace sarlora::radio
