//! Geodesic helpers: haversine distance, bearings and heading arithmetic.
//!
//! Headings are compass bearings in degrees, 0 = north, increasing clockwise.

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A WGS84-style latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    /// Validated constructor. Poles are rejected because headings are
    /// undefined there.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GraphError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GraphError::InvalidCoordinate { lat, lon });
        }
        if lat <= -90.0 || lat >= 90.0 || !(-180.0..=180.0).contains(&lon) {
            return Err(GraphError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    /// Offset this point by `north_m`/`east_m` meters using a local
    /// equirectangular approximation.
    pub fn offset_m(self, north_m: f64, east_m: f64) -> LatLon {
        let dlat = north_m / EARTH_RADIUS_M;
        let dlon = east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos());
        LatLon {
            lat: self.lat + dlat.to_degrees(),
            lon: self.lon + dlon.to_degrees(),
        }
    }
}

/// Great-circle distance in meters (haversine).
pub fn geodesic_distance(a: LatLon, b: LatLon) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Initial bearing from `a` to `b` in `[0, 360)`. Returns 0 for coincident points.
pub fn initial_bearing(a: LatLon, b: LatLon) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    normalize_heading(y.atan2(x).to_degrees())
}

/// Wrap any angle into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Signed difference `to - from` wrapped into `(-180, 180]`.
/// Positive values are clockwise (to the right).
pub fn signed_angle_diff(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Absolute angular separation in `[0, 180]`.
pub fn angular_separation(a: f64, b: f64) -> f64 {
    signed_angle_diff(a, b).abs()
}
