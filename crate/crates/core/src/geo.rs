//! Local tangent-plane (ENU) conversion around a geodetic anchor.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_E2: f64 = 6.694_379_990_14e-3;

/// Geodetic anchor of an ENU frame. Degrees and metres above sea level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticAnchor {
    pub lon: f64,
    pub lat: f64,
    pub alt: f64,
}

impl GeodeticAnchor {
    pub fn new(lon: f64, lat: f64, alt: f64) -> Self {
        Self { lon, lat, alt }
    }

    /// Meridian and prime-vertical radii of curvature at the anchor latitude.
    fn radii(&self) -> (f64, f64) {
        let s = self.lat.to_radians().sin();
        let w = (1.0 - WGS84_E2 * s * s).sqrt();
        let prime = WGS84_A / w;
        let meridian = WGS84_A * (1.0 - WGS84_E2) / (w * w * w);
        (meridian, prime)
    }

    /// ENU metres → (lon, lat, alt).
    pub fn to_geodetic(&self, enu: &Vector3<f64>) -> (f64, f64, f64) {
        let (m, n) = self.radii();
        let lat = self.lat + (enu.y / m).to_degrees();
        let lon = self.lon + (enu.x / (n * self.lat.to_radians().cos())).to_degrees();
        (lon, lat, self.alt + enu.z)
    }

    /// (lon, lat, alt) → ENU metres.
    pub fn to_enu(&self, lon: f64, lat: f64, alt: f64) -> Vector3<f64> {
        let (m, n) = self.radii();
        Vector3::new(
            (lon - self.lon).to_radians() * n * self.lat.to_radians().cos(),
            (lat - self.lat).to_radians() * m,
            alt - self.alt,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enu_round_trip() {
        let anchor = GeodeticAnchor::new(7.47, 45.72, 1700.0);
        let p = Vector3::new(8300.0, -2100.0, 2250.0);
        let (lon, lat, alt) = anchor.to_geodetic(&p);
        let q = anchor.to_enu(lon, lat, alt);
        assert!((p - q).norm() < 1e-9);
    }

    #[test]
    fn one_arcminute_of_latitude_is_about_a_nautical_mile() {
        let anchor = GeodeticAnchor::new(0.0, 45.0, 0.0);
        let d = anchor.to_enu(0.0, 45.0 + 1.0 / 60.0, 0.0);
        assert!((d.y - 1852.0).abs() < 5.0, "{}", d.y);
    }
}
