//! Crank–Nicolson propagation of the reduced radial wavefunction `u(r) = r·χ(r)`.
//!
//! The relative coordinate `X - Y` has reduced mass `M/2`, so the radial
//! Hamiltonian is `H = -(ħ²/M) d²/dr² + V(r)` with Dirichlet walls at `r = 0`
//! and `r = r_max`. Each step solves `(1 + iHdt/2ħ) u' = (1 - iHdt/2ħ) u`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::potential::PotentialTable;
use crate::tridiag::{self, TridiagonalLu};
use crate::units::CGS;
use crate::{Error, PhysicalSetup, Result};

/// Uniform grid of interior nodes `r_i = i·dr`, `i = 1..=n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub n_points: usize,
    pub dr: f64,
}

impl RadialGrid {
    pub fn new(n_points: usize, r_max: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::invalid("n_points", "need at least two interior nodes"));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::invalid("r_max", format!("must be positive, got {r_max}")));
        }
        Ok(Self {
            n_points,
            dr: r_max / (n_points + 1) as f64,
        })
    }

    /// Position of the outer Dirichlet wall.
    pub fn r_max(&self) -> f64 {
        (self.n_points + 1) as f64 * self.dr
    }

    pub fn r(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dr
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.r(i))
    }
}

/// Radial amplitude on the interior nodes, normalized as `Σ|u_i|² dr = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialState {
    pub grid: RadialGrid,
    pub u: Vec<Complex64>,
    /// s
    pub t: f64,
}

impl RadialState {
    pub fn norm_sqr(&self) -> f64 {
        self.u.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dr
    }

    /// `χ(r) = u(r)/r`, linear between nodes, extrapolated from the first two
    /// nodes inside `r_1`, zero at and beyond the outer wall.
    pub fn chi(&self, r: f64) -> Complex64 {
        let dr = self.grid.dr;
        let n = self.grid.n_points;
        let x = r / dr;
        if !(x < (n + 1) as f64) {
            return Complex64::new(0.0, 0.0);
        }
        let node_chi = |k: usize| self.u[k - 1] / (k as f64 * dr);
        if x < 1.0 {
            let (c1, c2) = (node_chi(1), node_chi(2));
            // line through nodes 1 and 2
            return c1 + (c2 - c1) * (x - 1.0);
        }
        let k = x.floor() as usize;
        let frac = x - k as f64;
        let lo = node_chi(k);
        let hi = if k == n { Complex64::new(0.0, 0.0) } else { node_chi(k + 1) };
        lo + (hi - lo) * frac
    }

    /// Normalized 3D relative wavefunction `φ(r) = χ(r)/√(4π)`.
    pub fn phi(&self, r: f64) -> Complex64 {
        self.chi(r) / (4.0 * PI).sqrt()
    }

    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        for (i, z) in self.u.iter().enumerate() {
            if z.norm() > self.u[best].norm() {
                best = i;
            }
        }
        best
    }
}

/// `u_i ∝ r_i exp(-r_i²/2σ²)` normalized on the grid. Returns the state and the
/// fraction of the continuum norm cut off by the outer wall.
pub fn gaussian_state(grid: &RadialGrid, width: f64) -> Result<(RadialState, f64)> {
    let limit = width / 20.0;
    if grid.dr >= limit {
        return Err(Error::GridTooCoarse { dr: grid.dr, limit });
    }
    let mut u: Vec<Complex64> = grid
        .nodes()
        .map(|r| Complex64::new(r * (-r * r / (2.0 * width * width)).exp(), 0.0))
        .collect();
    let raw: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dr;
    // ∫₀^∞ r² exp(-r²/σ²) dr
    let continuum = PI.sqrt() * width.powi(3) / 4.0;
    let scale = raw.sqrt().recip();
    u.iter_mut().for_each(|z| *z *= scale);
    Ok((RadialState { grid: *grid, u, t: 0.0 }, (1.0 - raw / continuum).max(0.0)))
}

/// The untangled initial meta-state's relative factor, width `setup.lambda0()`.
pub fn initial_state(setup: &PhysicalSetup, grid: &RadialGrid) -> Result<RadialState> {
    gaussian_state(grid, setup.lambda0()).map(|(s, _)| s)
}

/// Factored Crank–Nicolson operators for one grid, potential and time step.
#[derive(Debug, Clone)]
pub struct PropagatorWorkspace {
    grid: RadialGrid,
    dt: f64,
    lhs: TridiagonalLu,
    rhs_diag: Vec<Complex64>,
    rhs_off: Complex64,
}

impl PropagatorWorkspace {
    pub fn new(table: &PotentialTable, dt: f64) -> Result<Self> {
        if !(dt != 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be nonzero and finite, got {dt}")));
        }
        let grid = *table.grid();
        let (h_diag, h_off) = hamiltonian(table.setup(), table);
        let a = dt / (2.0 * CGS.hbar);
        let i_a = Complex64::new(0.0, a);
        let lhs_diag: Vec<_> = h_diag.iter().map(|&h| 1.0 + i_a * h).collect();
        let rhs_diag = h_diag.iter().map(|&h| 1.0 - i_a * h).collect();
        let lhs = TridiagonalLu::factor(&lhs_diag, i_a * h_off, i_a * h_off)?;
        Ok(Self {
            grid,
            dt,
            lhs,
            rhs_diag,
            rhs_off: -i_a * h_off,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Advances `state` by one step; `scratch` must have the grid's length.
    pub fn advance(&self, state: &mut RadialState, scratch: &mut Vec<Complex64>) -> Result<()> {
        if state.grid != self.grid || state.u.len() != self.grid.n_points {
            return Err(Error::WorkspaceMismatch);
        }
        scratch.resize(state.u.len(), Complex64::new(0.0, 0.0));
        tridiag::multiply(&self.rhs_diag, self.rhs_off, self.rhs_off, &state.u, scratch);
        self.lhs.solve_in_place(scratch);
        std::mem::swap(&mut state.u, scratch);
        state.t += self.dt;
        Ok(())
    }

    pub fn step(&self, state: &RadialState) -> Result<RadialState> {
        let mut next = state.clone();
        self.advance(&mut next, &mut Vec::new())?;
        Ok(next)
    }
}

/// Diagonal and constant off-diagonal of the discretized radial Hamiltonian (erg).
pub fn hamiltonian(setup: &PhysicalSetup, table: &PotentialTable) -> (Vec<f64>, f64) {
    let dr = table.grid().dr;
    let kinetic = CGS.hbar * CGS.hbar / (setup.mass() * dr * dr);
    let diag = table.values().iter().map(|v| 2.0 * kinetic + v).collect();
    (diag, -kinetic)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveParams {
    /// s
    pub t_final: f64,
    pub n_steps: usize,
    /// Emit a checkpoint every this many steps; zero disables checkpoints.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub state: RadialState,
    pub steps_taken: usize,
    pub dt: f64,
    /// `|Σ|u|²dr (final) - Σ|u|²dr (initial)|`
    pub norm_drift: f64,
}

/// Applies `n_steps` Crank–Nicolson steps of `t_final / n_steps`, calling
/// `on_checkpoint(step, state)` every `checkpoint_every` steps and after the last one.
pub fn evolve_with<F>(
    table: &PotentialTable,
    initial: &RadialState,
    params: &EvolveParams,
    mut on_checkpoint: F,
) -> Result<Evolution>
where
    F: FnMut(usize, &RadialState) -> Result<()>,
{
    if !(params.t_final >= 0.0 && params.t_final.is_finite()) {
        return Err(Error::invalid("t_final", format!("must be >= 0, got {}", params.t_final)));
    }
    let norm0 = initial.norm_sqr();
    if params.n_steps == 0 || params.t_final == 0.0 {
        return Ok(Evolution {
            state: initial.clone(),
            steps_taken: 0,
            dt: 0.0,
            norm_drift: 0.0,
        });
    }
    let dt = params.t_final / params.n_steps as f64;
    let ws = PropagatorWorkspace::new(table, dt)?;
    let mut state = initial.clone();
    let mut scratch = Vec::with_capacity(state.u.len());
    for k in 1..=params.n_steps {
        ws.advance(&mut state, &mut scratch)?;
        let cadence = params.checkpoint_every > 0 && k % params.checkpoint_every == 0;
        if cadence || k == params.n_steps {
            on_checkpoint(k, &state)?;
        }
    }
    let norm_drift = (state.norm_sqr() - norm0).abs();
    Ok(Evolution {
        state,
        steps_taken: params.n_steps,
        dt,
        norm_drift,
    })
}

/// Like [`evolve_with`], collecting checkpoints in memory.
pub fn evolve(
    table: &PotentialTable,
    initial: &RadialState,
    params: &EvolveParams,
) -> Result<(Evolution, Vec<(usize, RadialState)>)> {
    let mut checkpoints = Vec::new();
    let evo = evolve_with(table, initial, params, |k, s| {
        checkpoints.push((k, s.clone()));
        Ok(())
    })?;
    Ok((evo, checkpoints))
}
