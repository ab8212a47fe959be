//! Physical constants and the closed-form scales of a uniform ball.
//!
//! Everything is CGS. Masses enter in grams unless a function name says
//! otherwise; the command line converts from proton masses at the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// cm³ g⁻¹ s⁻²
    pub g: f64,
    /// erg s
    pub hbar: f64,
    /// g
    pub m_p: f64,
}

/// CODATA 2018 values in CGS units.
pub const CGS: Constants = Constants {
    g: 6.674_30e-8,
    hbar: 1.054_571_817e-27,
    m_p: 1.672_621_923_69e-24,
};

/// Ratio `lambda_g / R` at which a mass sits exactly on the localization threshold.
pub const THRESHOLD_WIDTH_RATIO: f64 = 1.0;

/// A uniform ball together with every scale derived from it.
///
/// Only constructible through validating constructors, so `density`,
/// `lambda_g` and `tau_g` always agree with `mass` and `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetupRecord", into = "SetupRecord")]
pub struct PhysicalSetup {
    mass: f64,
    radius: f64,
    density: f64,
    lambda_g: f64,
    tau_g: f64,
    lambda0: f64,
}

impl PhysicalSetup {
    /// Builds a setup from mass (g), radius (cm) and the initial relative width (cm).
    pub fn new(mass: f64, radius: f64, lambda0: f64) -> Result<Self> {
        positive("mass", mass)?;
        positive("radius", radius)?;
        positive("lambda0", lambda0)?;
        let density = mass / ball_volume(radius);
        let lambda_g = ground_width_formula(mass, radius);
        if lambda_g >= THRESHOLD_WIDTH_RATIO * radius {
            return Err(Error::BelowThreshold { lambda_g, radius });
        }
        Ok(Self {
            mass,
            radius,
            density,
            lambda_g,
            tau_g: localization_time(mass, density),
            lambda0,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mass_in_proton_masses(&self) -> f64 {
        self.mass / CGS.m_p
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    /// Width of the bound ground meta-state, `(8ħ²R³/GM³)^{1/4}`.
    pub fn lambda_g(&self) -> f64 {
        self.lambda_g
    }

    /// Localization time `ħ G⁻¹ M^{-5/3} ρ^{-1/3}`.
    pub fn tau_g(&self) -> f64 {
        self.tau_g
    }

    /// Initial Gaussian width of both the relative and center of meta-mass factors.
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn with_lambda0(&self, lambda0: f64) -> Result<Self> {
        Self::new(self.mass, self.radius, lambda0)
    }

    /// `M / M_t(ρ)`; above one means above the localization threshold.
    pub fn threshold_ratio(&self) -> f64 {
        self.mass / threshold_mass_unchecked(self.density)
    }
}

#[derive(Serialize, Deserialize)]
struct SetupRecord {
    mass: f64,
    radius: f64,
    density: f64,
    lambda_g: f64,
    tau_g: f64,
    lambda0: f64,
}

impl From<PhysicalSetup> for SetupRecord {
    fn from(s: PhysicalSetup) -> Self {
        Self {
            mass: s.mass,
            radius: s.radius,
            density: s.density,
            lambda_g: s.lambda_g,
            tau_g: s.tau_g,
            lambda0: s.lambda0,
        }
    }
}

impl TryFrom<SetupRecord> for PhysicalSetup {
    type Error = Error;

    // derived fields are recomputed; the stored copies are informational
    fn try_from(r: SetupRecord) -> Result<Self> {
        PhysicalSetup::new(r.mass, r.radius, r.lambda0)
    }
}

/// Builds a setup from a mass in proton masses, a density in g/cm³ and the
/// initial width as a multiple of the ground width.
pub fn make_setup(
    mass_in_proton_masses: f64,
    density: f64,
    lambda_multiple: f64,
) -> Result<PhysicalSetup> {
    positive("mass", mass_in_proton_masses)?;
    positive("density", density)?;
    if !(lambda_multiple >= 1.0) || !lambda_multiple.is_finite() {
        return Err(Error::invalid(
            "lambda_multiple",
            format!("must be >= 1, got {lambda_multiple}"),
        ));
    }
    let mass = mass_in_proton_masses * CGS.m_p;
    let radius = radius_from_density(mass, density);
    let lambda_g = ground_width_formula(mass, radius);
    PhysicalSetup::new(mass, radius, lambda_multiple * lambda_g)
}

pub fn radius_from_density(mass: f64, density: f64) -> f64 {
    (3.0 * mass / (4.0 * PI * density)).cbrt()
}

pub fn ball_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

/// `(8ħ²R³/GM³)^{1/4}` in cm.
pub fn ground_width_formula(mass: f64, radius: f64) -> f64 {
    (8.0 * CGS.hbar.powi(2) * radius.powi(3) / (CGS.g * mass.powi(3))).powf(0.25)
}

/// `ħ G⁻¹ M^{-5/3} ρ^{-1/3}` in s.
pub fn localization_time(mass: f64, density: f64) -> f64 {
    CGS.hbar / CGS.g * mass.powf(-5.0 / 3.0) * density.powf(-1.0 / 3.0)
}

/// Mass (g) at which the ground width equals the ball radius for the given density.
pub fn threshold_mass(density: f64) -> Result<f64> {
    positive("density", density)?;
    Ok(threshold_mass_unchecked(density))
}

fn threshold_mass_unchecked(density: f64) -> f64 {
    let c4 = THRESHOLD_WIDTH_RATIO.powi(4);
    (8.0 * CGS.hbar.powi(2) * (4.0 * PI * density / 3.0).cbrt() / (CGS.g * c4)).powf(0.3)
}

/// Maps a setup and a time onto the equivalent solution family member:
/// `t → λt`, `M → λ^{-1/5} M`, every length `→ λ^{3/5}·`.
pub fn apply_scaling(setup: &PhysicalSetup, t: f64, lambda: f64) -> Result<(PhysicalSetup, f64)> {
    positive("lambda", lambda)?;
    let length = lambda.powf(0.6);
    let scaled = PhysicalSetup::new(
        setup.mass * lambda.powf(-0.2),
        setup.radius * length,
        setup.lambda0 * length,
    )?;
    Ok((scaled, lambda * t))
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}
