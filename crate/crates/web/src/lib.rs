//! Browser demo. Each exported function has a plain Rust twin that the native
//! tests exercise; the wasm wrappers only convert errors.
//!
//! The relative-motion period depends on density alone, about 10⁴ s at the
//! default 1.37 g/cm³, so raising the density is the quick way to watch the
//! coherence length shrink within a short run.

use gravloc::analysis::analyze;
use gravloc::pipeline::{trace_state, Plan, RunConfig};
use gravloc::potential::{harmonic_params, potential, PotentialModel, PotentialTable};
use gravloc::solver::{evolve, gaussian_state, EvolveParams, RadialState};
use gravloc::units::{make_setup, CGS};
use gravloc::PhysicalSetup;
use wasm_bindgen::prelude::*;

/// Radial nodes up to the wall.
pub const DEMO_POINTS: usize = 1500;
/// The wall sits at `max(R/2, WALL_WIDTHS·Λ)` so that wide initial states are not cut.
pub const WALL_WIDTHS: f64 = 6.0;
/// Longest step, s.
pub const MAX_DT: f64 = 1e-3;
/// Largest phase `|V(0)|dt/ħ` one step may pick up from the well depth.
pub const MAX_WELL_PHASE: f64 = 0.05;
pub const MAX_STEPS: usize = 100_000;
pub const SLICE_POINTS: usize = 41;

/// Inputs shared by every operation.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy)]
pub struct DemoParams {
    pub mass_mp: f64,
    /// g/cm³
    pub density: f64,
    /// Initial width over the closed-form ground width.
    pub lambda_multiple: f64,
    /// s
    pub t_final: f64,
}

#[wasm_bindgen]
impl DemoParams {
    #[wasm_bindgen(constructor)]
    pub fn new(mass_mp: f64, density: f64, lambda_multiple: f64, t_final: f64) -> DemoParams {
        DemoParams { mass_mp, density, lambda_multiple, t_final }
    }
}

impl Default for DemoParams {
    fn default() -> Self {
        let setup = RunConfig::default().setup().expect("default config is valid");
        Self {
            mass_mp: setup.mass_in_proton_masses(),
            density: setup.density(),
            lambda_multiple: 5.6,
            t_final: 10.0,
        }
    }
}

impl DemoParams {
    fn setup(&self) -> gravloc::Result<PhysicalSetup> {
        make_setup(self.mass_mp, self.density, self.lambda_multiple)
    }

    fn config(&self) -> RunConfig {
        let setup = self.setup().ok();
        let n_steps = setup.map_or(1, |s| steps_for(&s, self.t_final));
        let r_max_over_radius = setup.map_or(0.5, |s| (WALL_WIDTHS * s.lambda0() / s.radius()).max(0.5));
        RunConfig {
            mass_mp: self.mass_mp,
            radius_cm: None,
            density: Some(self.density),
            lambda_multiple: self.lambda_multiple,
            lambda_g_ref: None,
            n_points: DEMO_POINTS,
            r_max_over_radius,
            t_final: self.t_final,
            n_steps,
            checkpoint_every: 0,
            quad_n_y: 96,
            quad_n_s: 48,
            slice_n: SLICE_POINTS,
            ..RunConfig::default()
        }
    }
}

/// Step count that keeps both the step and the well-depth phase per step small.
pub fn steps_for(setup: &PhysicalSetup, t_final: f64) -> usize {
    let depth = potential(setup, 0.0).map(f64::abs).unwrap_or(0.0);
    let dt = MAX_DT.min(MAX_WELL_PHASE * CGS.hbar / depth);
    ((t_final / dt).ceil() as usize).clamp(1, MAX_STEPS)
}

/// Rows `(r/R, V/(GM²/R), harmonic/(GM²/R))` for `r ∈ [0, 3R]`, flattened.
pub fn potential_rows(params: &DemoParams, samples: usize) -> gravloc::Result<Vec<f64>> {
    let setup = params.setup()?;
    let (m, r) = (setup.mass(), setup.radius());
    let unit = CGS.g * m * m / r;
    let hp = harmonic_params(&setup);
    let v0 = potential(&setup, 0.0)?;
    let samples = samples.max(2);
    let mut rows = Vec::with_capacity(3 * samples);
    for i in 0..samples {
        let x = 3.0 * i as f64 / (samples - 1) as f64;
        let sep = x * r;
        rows.extend([x, potential(&setup, sep)? / unit, (v0 + hp.quadratic_coefficient * sep * sep) / unit]);
    }
    Ok(rows)
}

fn evolve_demo(params: &DemoParams) -> gravloc::Result<(Plan, RadialState, RadialState)> {
    let plan = Plan::from_config(&params.config())?;
    let (initial, _) = gaussian_state(&plan.grid, plan.setup.lambda0())?;
    let table = PotentialTable::new(&plan.setup, &plan.grid, PotentialModel::Full);
    let evolve_params = EvolveParams { checkpoint_every: 0, ..plan.evolve };
    let (evo, _) = evolve(&table, &initial, &evolve_params)?;
    Ok((plan, initial, evo.state))
}

/// Rows `(r/R, |χ(0)|, |χ(t)|)` with `|χ|` scaled to the initial peak, flattened.
pub fn radial_rows(params: &DemoParams, every: usize) -> gravloc::Result<Vec<f64>> {
    let (plan, initial, last) = evolve_demo(params)?;
    let r_unit = plan.setup.radius();
    let chi = |s: &RadialState, i: usize, r: f64| s.u[i].norm() / r;
    let peak = plan.grid.nodes().enumerate().map(|(i, r)| chi(&initial, i, r)).fold(0.0, f64::max);
    let mut rows = Vec::new();
    for (i, r) in plan.grid.nodes().enumerate().step_by(every.max(1)) {
        rows.extend([r / r_unit, chi(&initial, i, r) / peak, chi(&last, i, r) / peak]);
    }
    Ok(rows)
}

/// What the demo shows about the traced one-body density matrix.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Localization {
    pub lambda_plus_over_r: f64,
    pub lambda_minus_over_r: f64,
    pub ratio: f64,
    pub purity: f64,
    /// nats
    pub s_spectral: f64,
    pub x_max_over_r: f64,
    pub n: usize,
    pub n_steps: usize,
    /// s
    pub harmonic_period: f64,
    kernel_abs: Vec<f64>,
}

#[wasm_bindgen]
impl Localization {
    /// `|ρ̃|` row-major on the `n × n` slice, scaled to its maximum.
    #[wasm_bindgen(getter)]
    pub fn kernel_abs(&self) -> Vec<f64> {
        self.kernel_abs.clone()
    }
}

pub fn localization(params: &DemoParams) -> gravloc::Result<Localization> {
    let (plan, _, last) = evolve_demo(params)?;
    let (slice, _) = trace_state(&plan, &last)?;
    let report = analyze(&slice, plan.lambda_g)?;
    let r = plan.setup.radius();
    let peak = slice.max_abs();
    Ok(Localization {
        lambda_plus_over_r: report.fit.lambda_plus / r,
        lambda_minus_over_r: report.fit.lambda_minus / r,
        ratio: report.fit.ratio(),
        purity: report.purity,
        s_spectral: report.s_spectral,
        x_max_over_r: plan.slice.x_max / r,
        n: slice.n(),
        n_steps: plan.evolve.n_steps,
        harmonic_period: 2.0 * std::f64::consts::PI / harmonic_params(&plan.setup).omega,
        kernel_abs: slice.kernel.iter().map(|z| z.norm() / peak).collect(),
    })
}

fn js(e: gravloc::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = defaultParams)]
pub fn default_params() -> DemoParams {
    DemoParams::default()
}

#[wasm_bindgen(js_name = potentialCurve)]
pub fn potential_curve(params: &DemoParams, samples: usize) -> Result<Vec<f64>, JsError> {
    potential_rows(params, samples).map_err(js)
}

#[wasm_bindgen(js_name = radialEvolution)]
pub fn radial_evolution(params: &DemoParams, every: usize) -> Result<Vec<f64>, JsError> {
    radial_rows(params, every).map_err(js)
}

#[wasm_bindgen(js_name = traceDensityMatrix)]
pub fn trace_density_matrix(params: &DemoParams) -> Result<Localization, JsError> {
    localization(params).map_err(js)
}
