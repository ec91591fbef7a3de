//! WGS84 point math: haversine distances and polygon containment.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters, fixed so independently computed distances agree.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GpsPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GpsPoint { lat, lon }
    }

    pub fn in_wgs84_range(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance in meters between two WGS84 points.
pub fn haversine_m(a: GpsPoint, b: GpsPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Closed polygon over (lat, lon) vertices. An empty polygon contains nothing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<GpsPoint>,
}

impl Polygon {
    pub fn new(vertices: Vec<GpsPoint>) -> Self {
        Polygon { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Ray-casting containment test in lat/lon space. Points on an edge count
    /// as inside often enough for farm boundaries; exactness there is not
    /// required by any caller.
    pub fn contains(&self, p: GpsPoint) -> bool {
        if self.is_empty() {
            return false;
        }
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let vi = self.vertices[i];
            let vj = self.vertices[j];
            let crosses = (vi.lat > p.lat) != (vj.lat > p.lat);
            if crosses {
                let slope_lon = (vj.lon - vi.lon) * (p.lat - vi.lat) / (vj.lat - vi.lat) + vi.lon;
                if p.lon < slope_lon {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Arithmetic mean of the vertices; adequate as a deterministic start
    /// position for small, convex farm boundaries.
    pub fn centroid(&self) -> GpsPoint {
        if self.vertices.is_empty() {
            return GpsPoint::new(0.0, 0.0);
        }
        let n = self.vertices.len() as f64;
        let lat = self.vertices.iter().map(|v| v.lat).sum::<f64>() / n;
        let lon = self.vertices.iter().map(|v| v.lon).sum::<f64>() / n;
        GpsPoint::new(lat, lon)
    }
}
