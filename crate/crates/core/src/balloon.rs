//! Balloon sizing for isopycnic floating.
//!
//! A closed, non-elastic sphere floats where the displaced air minus the
//! lifting gas balances the balloon skin plus the radioprobe:
//! `V_b · ρ_a · (1 − M_g/M_a) = m_r + m_b`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{self, AtmosphereError};

pub const AIR_MOLAR_MASS: f64 = 28.9647e-3;
pub const HELIUM_MOLAR_MASS: f64 = 4.0026e-3;

#[derive(Debug, Error, PartialEq)]
pub enum BalloonError {
    #[error("invalid balloon spec: {0}")]
    Invalid(&'static str),
    #[error("balloon cannot float in troposphere (required air density {0:.4} kg/m3)")]
    CannotFloat(f64),
    #[error("empty {0} list")]
    EmptyAxis(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalloonSpec {
    /// m
    pub radius: f64,
    /// m
    pub sheet_thickness: f64,
    /// kg/m3
    pub material_density: f64,
    /// kg/mol; an effective value covers helium/air mixtures.
    pub gas_molar_mass: f64,
    /// kg/mol
    pub air_molar_mass: f64,
    /// kg, radioprobe with battery and connections
    pub payload_mass: f64,
}

impl Default for BalloonSpec {
    /// Current prototype: 20 cm Mater-Bi sphere, 20 µm sheet, 17.5 g probe,
    /// pure helium.
    fn default() -> Self {
        Self {
            radius: 0.20,
            sheet_thickness: 20e-6,
            material_density: 1240.0,
            gas_molar_mass: HELIUM_MOLAR_MASS,
            air_molar_mass: AIR_MOLAR_MASS,
            payload_mass: 17.5e-3,
        }
    }
}

impl BalloonSpec {
    /// Effective molar mass of a helium/air mixture with the given helium
    /// mole fraction.
    pub fn mixture_molar_mass(helium_fraction: f64) -> f64 {
        helium_fraction * HELIUM_MOLAR_MASS + (1.0 - helium_fraction) * AIR_MOLAR_MASS
    }

    pub fn validate(&self) -> Result<(), BalloonError> {
        let positive = [
            (self.radius, "radius must be > 0"),
            (self.material_density, "material_density must be > 0"),
            (self.gas_molar_mass, "gas_molar_mass must be > 0"),
            (self.air_molar_mass, "air_molar_mass must be > 0"),
        ];
        for (v, msg) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(BalloonError::Invalid(msg));
            }
        }
        if !(self.sheet_thickness.is_finite() && self.sheet_thickness >= 0.0) {
            return Err(BalloonError::Invalid("sheet_thickness must be >= 0"));
        }
        if !(self.payload_mass.is_finite() && self.payload_mass >= 0.0) {
            return Err(BalloonError::Invalid("payload_mass must be >= 0"));
        }
        if self.gas_molar_mass >= self.air_molar_mass {
            return Err(BalloonError::Invalid("lifting gas must be lighter than air"));
        }
        Ok(())
    }

    pub fn surface_area(&self) -> f64 {
        4.0 * PI * self.radius * self.radius
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }

    pub fn total_mass(&self) -> f64 {
        self.payload_mass + balloon_mass(self)
    }

    /// Net lift per unit air density: `V_b (1 − M_g/M_a)`, m³.
    pub fn lift_volume(&self) -> f64 {
        self.volume() * (1.0 - self.gas_molar_mass / self.air_molar_mass)
    }

    pub fn cross_section(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

/// Skin mass `S Δ ρ_m`, kg.
pub fn balloon_mass(spec: &BalloonSpec) -> f64 {
    spec.surface_area() * spec.sheet_thickness * spec.material_density
}

/// Air density at which the balloon is neutrally buoyant, kg/m³.
pub fn required_air_density(spec: &BalloonSpec) -> f64 {
    spec.total_mass() / spec.lift_volume()
}

pub fn attainable_altitude(spec: &BalloonSpec) -> Result<f64, BalloonError> {
    spec.validate()?;
    let rho = required_air_density(spec);
    atmosphere::isa_altitude_for_density(rho).map_err(|e| match e {
        AtmosphereError::DensityOutOfRange(d) => BalloonError::CannotFloat(d),
        AtmosphereError::AltitudeOutOfRange(_) => BalloonError::CannotFloat(rho),
    })
}

/// Attainable altitude over a payload × radius grid. Infeasible cells are
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AltitudeGrid {
    pub payloads: Vec<f64>,
    pub radii: Vec<f64>,
    /// `cells[payload][radius]`
    pub cells: Vec<Vec<Option<f64>>>,
}

impl AltitudeGrid {
    pub fn feasible_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Long-format CSV: `payload_g,radius_m,balloon_mass_g,altitude_m`.
    /// Infeasible cells leave `altitude_m` empty.
    pub fn to_csv(&self, template: &BalloonSpec) -> String {
        let mut out = String::from("payload_g,radius_m,balloon_mass_g,altitude_m\n");
        for (i, &payload) in self.payloads.iter().enumerate() {
            for (j, &radius) in self.radii.iter().enumerate() {
                let spec = BalloonSpec { radius, payload_mass: payload, ..*template };
                let alt = self.cells[i][j].map(|a| format!("{a:.1}")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{:.1},{:.3},{:.3},{}",
                    payload * 1e3,
                    radius,
                    balloon_mass(&spec) * 1e3,
                    alt
                );
            }
        }
        out
    }
}

pub fn altitude_curve(
    template: &BalloonSpec,
    payloads: &[f64],
    radii: &[f64],
) -> Result<AltitudeGrid, BalloonError> {
    if payloads.is_empty() {
        return Err(BalloonError::EmptyAxis("payload"));
    }
    if radii.is_empty() {
        return Err(BalloonError::EmptyAxis("radius"));
    }
    let mut cells = Vec::with_capacity(payloads.len());
    for &payload_mass in payloads {
        let mut row = Vec::with_capacity(radii.len());
        for &radius in radii {
            let spec = BalloonSpec { radius, payload_mass, ..*template };
            row.push(match attainable_altitude(&spec) {
                Ok(h) => Some(h),
                Err(BalloonError::CannotFloat(_)) => None,
                Err(e) => return Err(e),
            });
        }
        cells.push(row);
    }
    Ok(AltitudeGrid { payloads: payloads.to_vec(), radii: radii.to_vec(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sheet(radius: f64) -> BalloonSpec {
        BalloonSpec { radius, ..BalloonSpec::default() }
    }

    #[test]
    fn skin_mass() {
        assert!((balloon_mass(&sheet(0.20)) * 1e3 - 12.466).abs() < 1e-3);
        assert!((balloon_mass(&sheet(0.21)) * 1e3 - 13.744).abs() < 1e-3);
        let bare = BalloonSpec { sheet_thickness: 0.0, ..BalloonSpec::default() };
        assert_eq!(balloon_mass(&bare), 0.0);
    }

    #[test]
    fn required_density_prototype() {
        // (17.5 g + 12.466 g) / (33.510e-3 m3 * (1 - 4.0026/28.9647))
        let rho = required_air_density(&BalloonSpec::default());
        assert!((rho - 1.0376).abs() < 1e-4, "{rho}");
        assert!((rho - 1.039).abs() < 2e-3);
    }

    #[test]
    fn required_density_limits() {
        let massless = BalloonSpec { payload_mass: 0.0, sheet_thickness: 0.0, ..BalloonSpec::default() };
        assert_eq!(required_air_density(&massless), 0.0);
        let base = BalloonSpec::default();
        let rho = required_air_density(&base);
        let doubled = BalloonSpec {
            payload_mass: base.payload_mass * 2.0,
            sheet_thickness: base.sheet_thickness * 2.0,
            ..base
        };
        assert!((required_air_density(&doubled) - 2.0 * rho).abs() < 1e-12);
    }

    #[test]
    fn attainable_altitudes() {
        let h20 = attainable_altitude(&sheet(0.20)).unwrap();
        let h21 = attainable_altitude(&sheet(0.21)).unwrap();
        assert!((h20 - 1700.0).abs() < 100.0, "{h20}");
        assert!((h21 - 2600.0).abs() < 250.0, "{h21}");
    }

    #[test]
    fn sea_level_neutral_buoyancy() {
        let mut spec = BalloonSpec::default();
        spec.payload_mass = 1.225 * spec.lift_volume() - balloon_mass(&spec);
        let h = attainable_altitude(&spec).unwrap();
        assert!(h.abs() < 0.01, "{h}");
    }

    #[test]
    fn neutral_buoyancy_residual() {
        for r in [0.20, 0.21, 0.22, 0.25] {
            let spec = sheet(r);
            let h = attainable_altitude(&spec).unwrap();
            let rho = atmosphere::isa_sample(h).unwrap().density;
            let resid = rho * spec.lift_volume() - spec.total_mass();
            assert!(resid.abs() < 1e-9, "r={r} resid={resid}");
        }
    }

    #[test]
    fn too_heavy_cannot_float() {
        let spec = BalloonSpec { payload_mass: 0.2, ..BalloonSpec::default() };
        assert!(matches!(attainable_altitude(&spec), Err(BalloonError::CannotFloat(_))));
    }

    #[test]
    fn invalid_specs() {
        let heavy_gas = BalloonSpec { gas_molar_mass: 0.04, ..BalloonSpec::default() };
        assert!(matches!(heavy_gas.validate(), Err(BalloonError::Invalid(_))));
        let no_radius = BalloonSpec { radius: 0.0, ..BalloonSpec::default() };
        assert!(no_radius.validate().is_err());
    }

    #[test]
    fn mixture_is_between_pure_gases() {
        let m = BalloonSpec::mixture_molar_mass(0.9);
        assert!(m > HELIUM_MOLAR_MASS && m < AIR_MOLAR_MASS);
        assert_eq!(BalloonSpec::mixture_molar_mass(1.0), HELIUM_MOLAR_MASS);
    }

    #[test]
    fn grid_monotone_and_composed() {
        let payloads: Vec<f64> = (0..8).map(|i| (5.5 + 3.0 * i as f64) * 1e-3).collect();
        let radii: Vec<f64> = (0..8).map(|i| 0.17 + 0.01 * i as f64).collect();
        let template = BalloonSpec::default();
        let grid = altitude_curve(&template, &payloads, &radii).unwrap();
        for (i, row) in grid.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                let direct = attainable_altitude(&BalloonSpec {
                    radius: radii[j],
                    payload_mass: payloads[i],
                    ..template
                })
                .ok();
                assert_eq!(*cell, direct);
                if let (Some(a), Some(Some(b))) = (cell, row.get(j + 1)) {
                    assert!(b > a, "radius monotonicity");
                }
                if let Some(Some(Some(b))) = grid.cells.get(i + 1).map(|r| r.get(j)) {
                    if let Some(a) = cell {
                        assert!(b < a, "payload monotonicity");
                    }
                }
            }
        }
        let csv = grid.to_csv(&template);
        assert_eq!(csv.lines().count(), 1 + 64);
        assert!(grid.feasible_count() > 0);
    }

    #[test]
    fn empty_axes() {
        let t = BalloonSpec::default();
        assert_eq!(altitude_curve(&t, &[0.0175], &[]), Err(BalloonError::EmptyAxis("radius")));
        assert_eq!(altitude_curve(&t, &[], &[0.2]), Err(BalloonError::EmptyAxis("payload")));
    }
}
