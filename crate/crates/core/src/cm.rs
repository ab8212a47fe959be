//! Center of meta-mass evolution and the gravity-free control system.
//!
//! The coordinate `S = (X+Y)/2` carries mass `2M` and never feels the mutual
//! potential, so its Gaussian spreads freely:
//! `ψ(S, t) ∝ exp(-|S|² / w(t))` with `w(t) = Λ²/2 + iħt/M`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::densmat::{trace_out_slice, DensityMatrixSlice, QuadratureSpec, RelativeFactor, SliceGrid1D};
use crate::units::CGS;
use crate::{Error, PhysicalSetup, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmState {
    /// g
    pub mass: f64,
    /// cm
    pub lambda: f64,
    /// s
    pub t: f64,
}

impl CmState {
    pub fn new(setup: &PhysicalSetup, lambda: f64, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Self {
            mass: setup.mass(),
            lambda,
            t,
        })
    }

    /// Complex width parameter `w(t)`, cm².
    pub fn w(&self) -> Complex64 {
        Complex64::new(0.5 * self.lambda * self.lambda, CGS.hbar * self.t / self.mass)
    }

    /// Normalized amplitude at `|S|² = s_sq`, so that `∫|ψ|² d³S = 1`.
    pub fn amplitude(&self, s_sq: f64) -> Complex64 {
        let w = self.w();
        let w0 = 0.5 * self.lambda * self.lambda;
        let norm = (2.0 / (PI * w0)).powf(0.75) * (Complex64::new(w0, 0.0) / w).powf(1.5);
        norm * (-s_sq / w).exp()
    }

    /// 1/e width of `|ψ|²` as a function of `|X+Y|`; equals `Λ` at `t = 0`.
    pub fn sum_width(&self) -> f64 {
        let spread = 2.0 * CGS.hbar * self.t / (self.mass * self.lambda * self.lambda);
        self.lambda * (1.0 + spread * spread).sqrt()
    }
}

/// Freely evolving relative factor `φ(r,t) ∝ exp(-r²/2d)`, `d = Λ² + 2iħt/M`,
/// normalized in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeRelative {
    pub mass: f64,
    pub lambda: f64,
    pub t: f64,
}

impl FreeRelative {
    fn d(&self) -> Complex64 {
        Complex64::new(self.lambda * self.lambda, 2.0 * CGS.hbar * self.t / self.mass)
    }
}

impl RelativeFactor for FreeRelative {
    fn phi(&self, r: f64) -> Complex64 {
        let d = self.d();
        let l2 = self.lambda * self.lambda;
        let norm = (PI * l2).powf(-0.75) * (Complex64::new(l2, 0.0) / d).powf(1.5);
        norm * (-(r * r) / (2.0 * d)).exp()
    }

    fn extent(&self) -> f64 {
        let spread = 2.0 * CGS.hbar * self.t / (self.mass * self.lambda * self.lambda);
        // |φ|² ∝ exp(-r²/ℓ²) with ℓ² = Λ²(1 + spread²)
        12.0 * self.lambda * (1.0 + spread * spread).sqrt()
    }
}

/// Single-body amplitude of the product state `Ψ(X)Ψ(Y)` that the gravity-free
/// meta-state factorizes into: `Ψ(X,t) ∝ exp(-|X|²/D)`, `D = Λ² + 2iħt/M`.
pub fn free_single_body(mass: f64, lambda: f64, t: f64, x_sq: f64) -> Complex64 {
    let l2 = lambda * lambda;
    let d = Complex64::new(l2, 2.0 * CGS.hbar * t / mass);
    let norm = (2.0 / (PI * l2)).powf(0.75) * (Complex64::new(l2, 0.0) / d).powf(1.5);
    norm * (-x_sq / d).exp()
}

/// Exact gravity-free kernel `ρ̃(x, x') = Ψ(x)Ψ*(x')` on the axis.
pub fn free_kernel_exact(mass: f64, lambda: f64, t: f64, x: f64, xp: f64) -> Complex64 {
    free_single_body(mass, lambda, t, x * x) * free_single_body(mass, lambda, t, xp * xp).conj()
}

/// Gravity-free control slice: both factors evolve freely and the hidden body
/// is traced out by the same quadrature as the gravity run.
pub fn free_density_slice(
    setup: &PhysicalSetup,
    lambda: f64,
    t: f64,
    grid: &SliceGrid1D,
    quad: Option<&QuadratureSpec>,
) -> Result<DensityMatrixSlice> {
    let cm = CmState::new(setup, lambda, t)?;
    let rel = FreeRelative {
        mass: setup.mass(),
        lambda,
        t,
    };
    let quad = match quad {
        Some(q) => *q,
        None => QuadratureSpec::auto(&cm, &rel, grid),
    };
    trace_out_slice(&cm, &rel, grid, &quad)
}
