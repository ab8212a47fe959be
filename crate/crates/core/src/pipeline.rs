//! End-to-end runs: setup → relative evolution → partial trace → analysis.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, spectral_entropy, LocalizationReport};
use crate::cm::{free_density_slice, CmState, FreeRelative};
use crate::densmat::{trace_out_slice, DensityMatrixSlice, QuadratureSpec, SliceGrid1D};
use crate::potential::{PotentialModel, PotentialTable};
use crate::solver::{evolve, gaussian_state, EvolveParams, Evolution, RadialGrid, RadialState};
use crate::units::{apply_scaling, radius_from_density, CGS};
use crate::{Error, PhysicalSetup, Result};

/// Length ratios must match `λ^{3/5}` this closely.
pub const SCALING_LENGTH_TOLERANCE: f64 = 1e-2;
/// Purity must be invariant to this relative tolerance.
pub const SCALING_PURITY_TOLERANCE: f64 = 5e-3;

/// Everything a run needs, in the units a user types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Ball mass in proton masses.
    pub mass_mp: f64,
    /// Ball radius, cm. Exactly one of `radius_cm` and `density` must be set;
    /// a file that sets neither gets the default radius.
    #[serde(default)]
    pub radius_cm: Option<f64>,
    /// g/cm³
    #[serde(default)]
    pub density: Option<f64>,
    /// Initial relative width in units of the ground width.
    pub lambda_multiple: f64,
    /// Ground width (cm) that `lambda_multiple` refers to; `None` (written
    /// `"formula"` in TOML) selects the closed form.
    #[serde(with = "ground_width")]
    pub lambda_g_ref: Option<f64>,
    pub n_points: usize,
    /// Outer wall of the radial domain, in units of the ball radius.
    pub r_max_over_radius: f64,
    /// s
    pub t_final: f64,
    pub n_steps: usize,
    pub checkpoint_every: usize,
    pub quad_n_y: usize,
    pub quad_n_s: usize,
    /// Odd, so that `x = 0` is a node.
    pub slice_n: usize,
    /// Slice half-width in units of the expected ensemble width.
    pub slice_extent: f64,
    pub gravity: bool,
    pub potential: PotentialModel,
    /// Also trace every checkpoint and record its spectral entropy.
    pub trace_checkpoints: bool,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mass_mp: 0.38e12,
            radius_cm: Some(4.8e-5),
            density: None,
            lambda_multiple: 5.6,
            lambda_g_ref: Some(1.6e-6),
            n_points: 10_000,
            r_max_over_radius: 0.5,
            t_final: 10.0,
            n_steps: 100_000,
            checkpoint_every: 10_000,
            quad_n_y: QuadratureSpec::DEFAULT_N_Y,
            quad_n_s: QuadratureSpec::DEFAULT_N_S,
            slice_n: 201,
            slice_extent: 3.0,
            gravity: true,
            potential: PotentialModel::Full,
            trace_checkpoints: false,
            output_dir: "gravloc-out".into(),
        }
    }
}

mod ground_width {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    const FORMULA: &str = "formula";

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Reference(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => Repr::Reference(*x),
            None => Repr::Named(FORMULA.into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Reference(x) => Ok(Some(x)),
            Repr::Named(name) if name == FORMULA => Ok(None),
            Repr::Named(other) => Err(serde::de::Error::custom(format!(
                "lambda_g_ref must be a width in cm or \"{FORMULA}\", got {other:?}"
            ))),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.radius_cm.is_none() && cfg.density.is_none() {
            cfg.radius_cm = Self::default().radius_cm;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        positive("mass_mp", self.mass_mp)?;
        match (self.radius_cm, self.density) {
            (Some(r), None) => positive("radius_cm", r)?,
            (None, Some(d)) => positive("density", d)?,
            _ => return Err(Error::invalid("radius_cm", "set exactly one of radius_cm and density")),
        }
        if !(self.lambda_multiple >= 1.0 && self.lambda_multiple.is_finite()) {
            return Err(Error::invalid("lambda_multiple", "must be >= 1"));
        }
        if let Some(l) = self.lambda_g_ref {
            positive("lambda_g_ref", l)?;
        }
        positive("r_max_over_radius", self.r_max_over_radius)?;
        positive("slice_extent", self.slice_extent)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid("t_final", "must be >= 0"));
        }
        for (name, v) in [
            ("n_points", self.n_points),
            ("n_steps", self.n_steps),
            ("quad_n_y", self.quad_n_y),
            ("quad_n_s", self.quad_n_s),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.slice_n < 3 || self.slice_n % 2 == 0 {
            return Err(Error::invalid("slice_n", "must be odd and >= 3"));
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<PhysicalSetup> {
        self.validate()?;
        let mass = self.mass_mp * CGS.m_p;
        let radius = match (self.radius_cm, self.density) {
            (Some(r), _) => r,
            (None, Some(d)) => radius_from_density(mass, d),
            (None, None) => unreachable!("validated"),
        };
        let probe = PhysicalSetup::new(mass, radius, radius)?;
        let reference = self.lambda_g_ref.unwrap_or(probe.lambda_g());
        probe.with_lambda0(self.lambda_multiple * reference)
    }
}

/// A fully resolved run in CGS units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub setup: PhysicalSetup,
    /// Ground width the initial width was measured against (reference or
    /// closed form), cm; also the unit of the naive count.
    pub lambda_g: f64,
    pub grid: RadialGrid,
    pub evolve: EvolveParams,
    pub quad_n_y: usize,
    pub quad_n_s: usize,
    pub slice: SliceGrid1D,
    pub gravity: bool,
    pub potential: PotentialModel,
    pub trace_checkpoints: bool,
}

/// `|X+Y|` width of the center of meta-mass factor times √2, the ensemble
/// width of the free control.
pub fn expected_lambda_plus(setup: &PhysicalSetup, t: f64) -> Result<f64> {
    Ok(std::f64::consts::SQRT_2 * CmState::new(setup, setup.lambda0(), t)?.sum_width())
}

impl Plan {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let setup = cfg.setup()?;
        let grid = RadialGrid::new(cfg.n_points, cfg.r_max_over_radius * setup.radius())?;
        let x_max = cfg.slice_extent * expected_lambda_plus(&setup, cfg.t_final)?;
        Ok(Self {
            lambda_g: cfg.lambda_g_ref.unwrap_or(setup.lambda_g()),
            setup,
            grid,
            evolve: EvolveParams {
                t_final: cfg.t_final,
                n_steps: cfg.n_steps,
                checkpoint_every: cfg.checkpoint_every,
            },
            quad_n_y: cfg.quad_n_y,
            quad_n_s: cfg.quad_n_s,
            slice: SliceGrid1D::new(cfg.slice_n, x_max)?,
            gravity: cfg.gravity,
            potential: cfg.potential,
            trace_checkpoints: cfg.trace_checkpoints,
        })
    }

    /// The same run mapped by `t → λt`, `M → λ^{-1/5}M`, lengths `→ λ^{3/5}`;
    /// node counts and step counts are unchanged.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let (setup, t_final) = apply_scaling(&self.setup, self.evolve.t_final, lambda)?;
        let length = lambda.powf(0.6);
        Ok(Self {
            setup,
            lambda_g: self.lambda_g * length,
            grid: RadialGrid::new(self.grid.n_points, self.grid.r_max() * length)?,
            evolve: EvolveParams { t_final, ..self.evolve },
            slice: SliceGrid1D::new(self.slice.n, self.slice.x_max * length)?,
            ..self.clone()
        })
    }

    fn cm(&self, t: f64) -> Result<CmState> {
        CmState::new(&self.setup, self.setup.lambda0(), t)
    }

    fn quadrature(&self, cm: &CmState, rel: &dyn crate::densmat::RelativeFactor) -> QuadratureSpec {
        QuadratureSpec::auto_with(cm, rel, &self.slice, self.quad_n_y, self.quad_n_s)
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup: f64,
    pub evolve: f64,
    pub trace: f64,
    pub analyze: f64,
}

/// Purity and spectral entropy of one traced checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub step: usize,
    pub t: f64,
    pub purity: f64,
    pub s_spectral: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: Plan,
    pub initial: RadialState,
    /// Fraction of the continuum Gaussian norm cut off by the outer wall and renormalized away.
    pub truncated_tail: f64,
    /// Absent for the gravity-free control, which is analytic.
    pub evolution: Option<Evolution>,
    pub checkpoints: Vec<(usize, RadialState)>,
    pub checkpoint_summaries: Vec<CheckpointSummary>,
    pub quadrature: QuadratureSpec,
    pub slice: DensityMatrixSlice,
    pub report: LocalizationReport,
    pub timings: Timings,
}

/// Traces the hidden body out at time `state.t` with the plan's slice and quadrature.
pub fn trace_state(plan: &Plan, state: &RadialState) -> Result<(DensityMatrixSlice, QuadratureSpec)> {
    let cm = plan.cm(state.t)?;
    let quad = plan.quadrature(&cm, state);
    Ok((trace_out_slice(&cm, state, &plan.slice, &quad)?, quad))
}

/// Gravity-free control slice at `t`.
pub fn free_slice(plan: &Plan, t: f64) -> Result<(DensityMatrixSlice, QuadratureSpec)> {
    let cm = plan.cm(t)?;
    let rel = FreeRelative {
        mass: plan.setup.mass(),
        lambda: plan.setup.lambda0(),
        t,
    };
    let quad = plan.quadrature(&cm, &rel);
    let slice = free_density_slice(&plan.setup, plan.setup.lambda0(), t, &plan.slice, Some(&quad))?;
    Ok((slice, quad))
}

pub fn run(plan: &Plan) -> Result<RunOutcome> {
    let mut timings = Timings::default();
    let clock = Instant::now();
    let (initial, truncated_tail) = gaussian_state(&plan.grid, plan.setup.lambda0())?;
    let model = if plan.gravity { plan.potential } else { PotentialModel::Free };
    let table = PotentialTable::new(&plan.setup, &plan.grid, model);
    timings.setup = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (evolution, checkpoints) = if plan.gravity {
        let (evo, cps) = evolve(&table, &initial, &plan.evolve)?;
        (Some(evo), cps)
    } else {
        (None, Vec::new())
    };
    timings.evolve = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (slice, quadrature) = match &evolution {
        Some(evo) => trace_state(plan, &evo.state)?,
        None => free_slice(plan, plan.evolve.t_final)?,
    };
    let mut checkpoint_summaries = Vec::new();
    if plan.trace_checkpoints {
        for (step, st) in &checkpoints {
            let (sl, _) = trace_state(plan, st)?;
            let unit = sl.to_unit_trace()?;
            checkpoint_summaries.push(CheckpointSummary {
                step: *step,
                t: st.t,
                purity: crate::densmat::purity(&unit)?,
                s_spectral: spectral_entropy(&unit)?.entropy,
            });
        }
    }
    timings.trace = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let report = analyze(&slice, plan.lambda_g)?;
    timings.analyze = clock.elapsed().as_secs_f64();

    Ok(RunOutcome {
        plan: plan.clone(),
        initial,
        truncated_tail,
        evolution,
        checkpoints,
        checkpoint_summaries,
        quadrature,
        slice,
        report,
        timings,
    })
}

/// Observables compared by the scaling check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingObservables {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub purity: f64,
}

impl From<&LocalizationReport> for ScalingObservables {
    fn from(r: &LocalizationReport) -> Self {
        Self {
            lambda_plus: r.fit.lambda_plus,
            lambda_minus: r.fit.lambda_minus,
            purity: r.purity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambda: f64,
    pub base: ScalingObservables,
    pub scaled: ScalingObservables,
    /// `λ^{3/5}`
    pub expected_length_ratio: f64,
    pub lambda_plus_ratio: f64,
    pub lambda_minus_ratio: f64,
    /// `|P_scaled / P_base - 1|`
    pub purity_deviation: f64,
    pub pass: bool,
}

impl ScalingReport {
    pub fn compare(lambda: f64, base: ScalingObservables, scaled: ScalingObservables) -> Self {
        let expected = lambda.powf(0.6);
        let lp = scaled.lambda_plus / base.lambda_plus;
        let lm = scaled.lambda_minus / base.lambda_minus;
        let purity_deviation = (scaled.purity / base.purity - 1.0).abs();
        let pass = (lp / expected - 1.0).abs() <= SCALING_LENGTH_TOLERANCE
            && (lm / expected - 1.0).abs() <= SCALING_LENGTH_TOLERANCE
            && purity_deviation <= SCALING_PURITY_TOLERANCE;
        Self {
            lambda,
            base,
            scaled,
            expected_length_ratio: expected,
            lambda_plus_ratio: lp,
            lambda_minus_ratio: lm,
            purity_deviation,
            pass,
        }
    }
}

/// Runs `plan` and its `λ`-scaled image and compares the rescaled observables.
pub fn scaling_check(plan: &Plan, lambda: f64) -> Result<ScalingReport> {
    let base = run(plan)?;
    scaling_check_against(&base, lambda)
}

/// Like [`scaling_check`], reusing an existing base run.
pub fn scaling_check_against(base: &RunOutcome, lambda: f64) -> Result<ScalingReport> {
    let scaled = run(&base.plan.scaled(lambda)?)?;
    Ok(ScalingReport::compare(
        lambda,
        (&base.report).into(),
        (&scaled.report).into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small() -> RunConfig {
        RunConfig {
            n_points: 1_000,
            n_steps: 200,
            checkpoint_every: 50,
            quad_n_y: 96,
            quad_n_s: 48,
            slice_n: 41,
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.lambda_multiple = 5.600000000000001;
        cfg.t_final = 0.1 + 0.2;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let partial = RunConfig::from_toml("t_final = 2.5\nn_steps = 10\n").unwrap();
        assert_eq!(partial.t_final, 2.5);
        assert_eq!(partial.mass_mp, 0.38e12);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert_eq!(partial.radius_cm, Some(4.8e-5));
        let by_density = RunConfig::from_toml("density = 19.3\n").unwrap();
        assert_eq!((by_density.radius_cm, by_density.density), (None, Some(19.3)));
        let formula = RunConfig::from_toml("lambda_g_ref = \"formula\"\n").unwrap();
        assert_eq!(formula.lambda_g_ref, None);
        assert!(formula.to_toml().unwrap().contains("lambda_g_ref = \"formula\""));
        assert!(RunConfig::from_toml("lambda_g_ref = \"closed\"\n").is_err());
    }

    #[test]
    fn config_validation() {
        let both = RunConfig { density: Some(1.0), ..RunConfig::default() };
        assert!(both.validate().is_err());
        let neither = RunConfig { radius_cm: None, ..RunConfig::default() };
        assert!(neither.validate().is_err());
        assert!(RunConfig { slice_n: 200, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { lambda_multiple: 0.5, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { n_steps: 0, ..RunConfig::default() }.validate().is_err());
    }

    #[test]
    fn default_setup_uses_reference_width() {
        let s = RunConfig::default().setup().unwrap();
        assert_relative_eq!(s.lambda0(), 5.6 * 1.6e-6, epsilon = 0.0, max_relative = 1e-15);
        assert_relative_eq!(s.radius(), 4.8e-5, epsilon = 0.0, max_relative = 1e-14);
        let formula = RunConfig { lambda_g_ref: None, ..RunConfig::default() }.setup().unwrap();
        assert_relative_eq!(formula.lambda0(), 5.6 * formula.lambda_g(), epsilon = 0.0, max_relative = 1e-15);
    }

    #[test]
    fn density_input_matches_radius_input() {
        let a = RunConfig::default().setup().unwrap();
        let b = RunConfig { radius_cm: None, density: Some(a.density()), ..RunConfig::default() }
            .setup()
            .unwrap();
        assert_relative_eq!(a.radius(), b.radius(), epsilon = 0.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_time_run_is_pure() {
        let cfg = RunConfig { t_final: 0.0, ..small() };
        let out = run(&Plan::from_config(&cfg).unwrap()).unwrap();
        assert!((out.report.purity - 1.0).abs() < 1e-3);
        assert!(out.report.s_spectral < 1e-2);
        assert_eq!(out.evolution.unwrap().steps_taken, 0);
    }

    #[test]
    fn gravity_free_control_is_pure() {
        let cfg = RunConfig { gravity: false, ..small() };
        let out = run(&Plan::from_config(&cfg).unwrap()).unwrap();
        assert!(out.evolution.is_none());
        assert_relative_eq!(out.report.fit.ratio(), 1.0, epsilon = 0.0, max_relative = 2e-2);
        assert!(out.report.purity > 0.999);
    }

    #[test]
    fn scaled_plan_scales_every_length() {
        let plan = Plan::from_config(&small()).unwrap();
        let big = plan.scaled(32.0).unwrap();
        assert_relative_eq!(big.grid.r_max(), 8.0 * plan.grid.r_max(), epsilon = 0.0, max_relative = 1e-14);
        assert_relative_eq!(big.slice.x_max, 8.0 * plan.slice.x_max, epsilon = 0.0, max_relative = 1e-14);
        assert_relative_eq!(big.evolve.t_final, 32.0 * plan.evolve.t_final, epsilon = 0.0, max_relative = 1e-15);
        assert_eq!(big.evolve.n_steps, plan.evolve.n_steps);
    }

    #[test]
    fn scaling_report_tolerances() {
        let base = ScalingObservables { lambda_plus: 1.0, lambda_minus: 0.5, purity: 0.5 };
        let good = ScalingObservables { lambda_plus: 8.05, lambda_minus: 3.98, purity: 0.501 };
        assert!(ScalingReport::compare(32.0, base, good).pass);
        let bad = ScalingObservables { lambda_plus: 8.2, ..good };
        assert!(!ScalingReport::compare(32.0, base, bad).pass);
        let bad = ScalingObservables { purity: 0.51, ..good };
        assert!(!ScalingReport::compare(32.0, base, bad).pass);
    }
}
