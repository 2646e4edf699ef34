use std::collections::HashMap;

use crate::geo::{geodesic_distance, LatLon, EARTH_RADIUS_M};

/// Nominal cell edge length in meters.
const CELL_M: f64 = 100.0;

/// Fixed-cell grid over node positions, bucketed in latitude/longitude
/// degrees. Candidate cells come from a conservative bounding box around
/// the query circle; the exact haversine filter runs afterwards.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    lat_cell: f64,
    lon_cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    len: usize,
}

impl SpatialIndex {
    pub fn build(positions: impl Iterator<Item = LatLon>) -> Self {
        let positions: Vec<LatLon> = positions.collect();
        let ref_lat = if positions.is_empty() {
            0.0
        } else {
            positions.iter().map(|p| p.lat).sum::<f64>() / positions.len() as f64
        };
        let lat_cell = (CELL_M / EARTH_RADIUS_M).to_degrees();
        let lon_cell = (CELL_M / (EARTH_RADIUS_M * ref_lat.to_radians().cos().max(1e-3))).to_degrees();
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            let key = (
                (p.lat / lat_cell).floor() as i64,
                (p.lon / lon_cell).floor() as i64,
            );
            cells.entry(key).or_default().push(i);
        }
        Self {
            lat_cell,
            lon_cell,
            cells,
            len: positions.len(),
        }
    }

    /// Indices of all points within `radius_m` of `center`, sorted ascending.
    pub fn within(&self, center: LatLon, radius_m: f64, pos: impl Fn(usize) -> LatLon) -> Vec<usize> {
        if radius_m.is_nan() || radius_m < 0.0 {
            return Vec::new();
        }
        let hit = |i: &usize| geodesic_distance(center, pos(*i)) <= radius_m;
        let brute = || (0..self.len).filter(hit).collect::<Vec<_>>();

        let ang = radius_m / EARTH_RADIUS_M;
        if ang >= std::f64::consts::FRAC_PI_2 {
            return brute();
        }
        let dlat = ang.to_degrees();
        if center.lat.abs() + dlat >= 89.0 {
            return brute();
        }
        let s = ang.sin() / center.lat.to_radians().cos();
        if s >= 1.0 {
            return brute();
        }
        let dlon = s.asin().to_degrees();
        let eps = 1e-9;
        let (lat_lo, lat_hi) = (center.lat - dlat - eps, center.lat + dlat + eps);
        let (lon_lo, lon_hi) = (center.lon - dlon - eps, center.lon + dlon + eps);
        if lon_lo < -180.0 || lon_hi > 180.0 {
            return brute();
        }
        let (r0, r1) = (
            (lat_lo / self.lat_cell).floor() as i64,
            (lat_hi / self.lat_cell).floor() as i64,
        );
        let (c0, c1) = (
            (lon_lo / self.lon_cell).floor() as i64,
            (lon_hi / self.lon_cell).floor() as i64,
        );
        let span = (r1 - r0 + 1).saturating_mul(c1 - c0 + 1);
        if span as usize > self.cells.len().max(1) * 4 {
            return brute();
        }
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if let Some(bucket) = self.cells.get(&(r, c)) {
                    out.extend(bucket.iter().copied().filter(hit));
                }
            }
        }
        out.sort_unstable();
        out
    }
}
