//! Halved mutual gravitational energy of two interpenetrating uniform balls.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::solver::RadialGrid;
use crate::units::CGS;
use crate::{Error, PhysicalSetup, Result};

/// Which relative-motion potential a propagation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PotentialModel {
    /// Overlap potential of two uniform balls.
    #[default]
    Full,
    /// Quadratic expansion about `r = 0`, same depth.
    Harmonic,
    /// `V ≡ 0`.
    Free,
}

/// `V(r)` in erg for separation `r` (cm) of the two meta-ball centers.
pub fn potential(setup: &PhysicalSetup, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::invalid("r", format!("separation must be >= 0, got {r}")));
    }
    Ok(ball_overlap(setup.mass(), setup.radius(), r))
}

/// Interior polynomial for `r <= 2R`, Newtonian tail beyond.
pub fn ball_overlap(mass: f64, radius: f64, r: f64) -> f64 {
    if r <= 2.0 * radius {
        overlapping_branch(mass, radius, r)
    } else {
        separated_branch(mass, r)
    }
}

/// The `r <= 2R` polynomial, evaluated at any `r`.
pub fn overlapping_branch(mass: f64, radius: f64, r: f64) -> f64 {
    let half_gm2 = 0.5 * CGS.g * mass * mass;
    let r2 = radius * radius;
    let r3 = r2 * radius;
    let poly = 80.0 * r3 * r * r - 30.0 * r2 * r * r * r + r.powi(5) - 192.0 * r2 * r3;
    half_gm2 * poly / (160.0 * r3 * r3)
}

/// The `r > 2R` point-mass branch `-GM²/2r`.
pub fn separated_branch(mass: f64, r: f64) -> f64 {
    -0.5 * CGS.g * mass * mass / r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicParams {
    /// Small-oscillation angular frequency, s⁻¹.
    pub omega: f64,
    /// `σ` of the ground state `exp(-r²/2σ²)` of the relative motion, cm.
    pub ground_width: f64,
    /// Coefficient `k` of `V ≈ V(0) + k r²`, erg cm⁻².
    pub quadratic_coefficient: f64,
}

/// Harmonic limit of the potential with reduced mass `M/2`.
pub fn harmonic_params(setup: &PhysicalSetup) -> HarmonicParams {
    let (m, r) = (setup.mass(), setup.radius());
    let quadratic_coefficient = CGS.g * m * m / (4.0 * r.powi(3));
    let reduced = 0.5 * m;
    let omega = (2.0 * quadratic_coefficient / reduced).sqrt();
    HarmonicParams {
        omega,
        ground_width: (CGS.hbar / (reduced * omega)).sqrt(),
        quadratic_coefficient,
    }
}

fn evaluate(model: PotentialModel, setup: &PhysicalSetup, r: f64) -> f64 {
    match model {
        PotentialModel::Full => ball_overlap(setup.mass(), setup.radius(), r),
        PotentialModel::Harmonic => {
            let k = harmonic_params(setup).quadratic_coefficient;
            ball_overlap(setup.mass(), setup.radius(), 0.0) + k * r * r
        }
        PotentialModel::Free => 0.0,
    }
}

/// The potential sampled once on the interior nodes of a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    setup: PhysicalSetup,
    model: PotentialModel,
    grid: RadialGrid,
    values: Vec<f64>,
}

impl PotentialTable {
    pub fn new(setup: &PhysicalSetup, grid: &RadialGrid, model: PotentialModel) -> Self {
        let values = grid.nodes().map(|r| evaluate(model, setup, r)).collect();
        Self {
            setup: *setup,
            model,
            grid: *grid,
            values,
        }
    }

    pub fn setup(&self) -> &PhysicalSetup {
        &self.setup
    }

    pub fn model(&self) -> PotentialModel {
        self.model
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes `r,V` rows at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,V")?;
        for (r, v) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}
