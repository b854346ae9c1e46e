//! Physical parameters of the nuclear chain and unit conversions.
//!
//! Rates are stored in units of the total single-nucleus decay rate, so
//! `DecayParameters::gamma_total` is 1 for the stock parameter sets and time
//! is measured in `1/Gamma`. Conversion to nanoseconds happens only at the
//! I/O boundary via [`ns_per_inverse_gamma`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Lattice spacing of alpha-iron, in meters.
pub const FE57_LATTICE_SPACING_M: f64 = 287e-12;
/// Wavelength of the 14.4 keV transition of 57Fe, in meters.
pub const FE57_WAVELENGTH_M: f64 = 86e-12;
/// Total linewidth of the 57Fe Moessbauer transition, in neV.
pub const FE57_LINEWIDTH_NEV: f64 = 4.7;
/// Internal-conversion coefficient of 57Fe, `Gamma_IC / Gamma_rad`.
pub const FE57_INTERNAL_CONVERSION: f64 = 8.56;
/// Reduced Planck constant in eV s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;

/// `hbar / Gamma` in nanoseconds for a linewidth given in neV.
pub fn ns_per_inverse_gamma(linewidth_nev: f64) -> f64 {
    HBAR_EV_S / (linewidth_nev * 1e-9) * 1e9
}

/// Geometry of a regular linear chain illuminated by a plane wave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry<T> {
    /// Nearest-neighbour distance `a0` in meters.
    pub lattice_spacing: T,
    /// Transition wavelength `lambda0` in meters.
    pub wavelength: T,
    /// Angle between the dipole moments and the chain axis.
    pub dipole_angle: T,
    /// Angle between the incident wave vector and the chain axis.
    pub incidence_angle: T,
}

impl<T: Real> ChainGeometry<T> {
    pub fn new(
        lattice_spacing: T,
        wavelength: T,
        dipole_angle: T,
        incidence_angle: T,
    ) -> Result<Self> {
        let geom = Self {
            lattice_spacing,
            wavelength,
            dipole_angle,
            incidence_angle,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// 57Fe in alpha-iron, dipoles perpendicular to the chain.
    pub fn fe57(incidence_angle: T) -> Self {
        Self {
            lattice_spacing: lit(FE57_LATTICE_SPACING_M),
            wavelength: lit(FE57_WAVELENGTH_M),
            dipole_angle: T::FRAC_PI_2(),
            incidence_angle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lattice_spacing > T::zero() && self.lattice_spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lattice spacing must be positive, got {}",
                self.lattice_spacing
            )));
        }
        if !(self.wavelength > T::zero() && self.wavelength.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        for (name, angle) in [
            ("dipole angle", self.dipole_angle),
            ("incidence angle", self.incidence_angle),
        ] {
            if !(angle >= T::zero() && angle <= T::PI()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, pi], got {angle}"
                )));
            }
        }
        Ok(())
    }

    /// Scaled distance `k0 a0 = 2 pi a0 / lambda0`.
    pub fn eta0(&self) -> T {
        T::TAU() * self.lattice_spacing / self.wavelength
    }

    /// Incident phase difference between neighbouring sites.
    pub fn phase_step(&self) -> T {
        self.eta0() * self.incidence_angle.cos()
    }

    pub fn with_incidence(&self, incidence_angle: T) -> Self {
        Self {
            incidence_angle,
            ..*self
        }
    }
}

/// Decay channels of a single nucleus and the dipole-coupling prefactor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayParameters<T> {
    pub gamma_rad: T,
    pub gamma_ic: T,
    /// Prefactor of the free-space dipole-dipole couplings.
    pub gamma0: T,
}

impl<T: Real> DecayParameters<T> {
    pub fn new(gamma_rad: T, gamma_ic: T, gamma0: T) -> Result<Self> {
        let d = Self {
            gamma_rad,
            gamma_ic,
            gamma0,
        };
        d.validate()?;
        Ok(d)
    }

    /// Unit total rate split by the internal-conversion coefficient, with
    /// `gamma0 = Gamma_rad / 2`.
    pub fn from_conversion_ratio(ratio: T) -> Result<Self> {
        if !(ratio >= T::zero() && ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "internal-conversion ratio must be non-negative, got {ratio}"
            )));
        }
        let gamma_rad = T::one() / (T::one() + ratio);
        let gamma_ic = T::one() - gamma_rad;
        Self::new(gamma_rad, gamma_ic, gamma_rad / lit(2.0))
    }

    /// 57Fe with the physical internal-conversion coefficient.
    pub fn fe57() -> Self {
        Self::from_conversion_ratio(lit(FE57_INTERNAL_CONVERSION))
            .expect("stock parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_rad", self.gamma_rad),
            ("gamma_ic", self.gamma_ic),
            ("gamma0", self.gamma0),
        ] {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.gamma_total() > T::zero()) {
            return Err(Error::InvalidParameter(
                "total decay rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `Gamma = Gamma_rad + Gamma_IC`.
    pub fn gamma_total(&self) -> T {
        self.gamma_rad + self.gamma_ic
    }

    pub fn with_gamma0(&self, gamma0: T) -> Self {
        Self { gamma0, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fe57_eta0() {
        let g = ChainGeometry::<f64>::fe57(0.0);
        let expected = 2.0 * std::f64::consts::PI * 287.0 / 86.0;
        assert!(((g.eta0() - expected) / expected).abs() < 1e-12);
        assert!((g.eta0() - 20.97).abs() < 0.01);
        assert!((g.phase_step() - g.eta0()).abs() < 1e-12);
    }

    #[test]
    fn phase_step_bounded_by_eta0() {
        for i in 0..=100 {
            let g = ChainGeometry::<f64>::fe57(std::f64::consts::PI * i as f64 / 100.0);
            assert!(g.phase_step().abs() <= g.eta0() + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ChainGeometry::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ChainGeometry::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(ChainGeometry::new(1.0, 1.0, 4.0, 0.0).is_err());
        assert!(ChainGeometry::new(1.0, 1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn decay_total_is_sum() {
        let d = DecayParameters::<f64>::fe57();
        assert_eq!(d.gamma_total(), d.gamma_rad + d.gamma_ic);
        assert!((d.gamma_total() - 1.0).abs() < 1e-15);
        assert!((d.gamma_ic / d.gamma_rad - 8.56).abs() < 1e-12);
        assert_eq!(d.gamma0, d.gamma_rad / 2.0);
        assert!(DecayParameters::new(0.0, 0.0, 0.0).is_err());
        assert!(DecayParameters::new(1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn inverse_linewidth_in_ns() {
        let ns = ns_per_inverse_gamma(FE57_LINEWIDTH_NEV);
        assert!((ns - 140.0).abs() < 0.1);
    }
}
